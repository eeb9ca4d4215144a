"""
- expose the Django admin under "/admin/" for browsing recorded scenario runs
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    # Django admin interface
    path("admin/", admin.site.urls),
]

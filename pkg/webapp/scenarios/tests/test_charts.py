from unittest import mock

import pandas as pd
from django.test import SimpleTestCase
from matplotlib.axes import Axes

from scenarios.utils import BASELINE_COLOR, LINBFT_COLOR, get_separation_chart


def sweep_frame():
    return pd.DataFrame({
        "n": [4, 16, 64],
        "linbft_per_height": [15.0, 75.0, 315.0],
        "closed_form": [15, 75, 315],
        "pbft_baseline": [39.0, 555.0, 8379.0],
        "amortized_per_block": [26.0, 130.0, 600.0],
    })


class SeparationChartTests(SimpleTestCase):
    def test_returns_png_bytes(self):
        png = get_separation_chart(sweep_frame(), slope=1.03, baseline_slope=1.97)
        self.assertTrue(png.startswith(b"\x89PNG"))

    def test_empty_frame_is_rejected(self):
        with self.assertRaises(ValueError):
            get_separation_chart(sweep_frame().iloc[0:0])

    def test_curves_use_the_chart_palette(self):
        original = Axes.loglog
        colors = []

        def spy(ax, *args, **kwargs):
            colors.append(kwargs.get("color"))
            return original(ax, *args, **kwargs)

        with mock.patch.object(Axes, "loglog", autospec=True, side_effect=spy):
            get_separation_chart(sweep_frame())
        self.assertEqual(colors[:2], [LINBFT_COLOR, BASELINE_COLOR])
        self.assertEqual(LINBFT_COLOR, "#4e79a7")
        self.assertEqual(BASELINE_COLOR, "#f28e2b")

# Generated by Django 4.2.26 on 2026-10-18 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=100)),
                ('config_path', models.CharField(blank=True, max_length=500)),
                ('report_path', models.CharField(blank=True, max_length=500)),
                ('created', models.DateTimeField(auto_now_add=True)),
                ('seed', models.BigIntegerField()),
                ('n', models.IntegerField(help_text='Genesis participant count.')),
                ('f', models.IntegerField(help_text='Fault bound the quorum is built for.')),
                ('f_actual', models.IntegerField(help_text='Number of corrupted nodes in the run.')),
                ('num_heights', models.IntegerField()),
                ('safety_ok', models.BooleanField()),
                ('liveness_ok', models.BooleanField()),
                ('exit_code', models.IntegerField()),
                ('consensus_units', models.BigIntegerField(default=0)),
                ('body_units', models.BigIntegerField(default=0)),
                ('catchup_units', models.BigIntegerField(default=0)),
                ('setup_units', models.BigIntegerField(default=0)),
                ('finished_at', models.BigIntegerField(help_text='Simulated time when the run stopped.')),
                ('max_malicious_prefix', models.IntegerField(default=0)),
                ('slashes', models.IntegerField(default=0)),
            ],
            options={
                'ordering': ['-created', 'name'],
                'indexes': [models.Index(fields=['name'], name='scenario_run_name_idx'), models.Index(fields=['n'], name='scenario_run_n_idx')],
            },
        ),
        migrations.CreateModel(
            name='HeightOutcome',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('height', models.IntegerField()),
                ('epoch', models.IntegerField(default=0)),
                ('rounds_used', models.IntegerField(help_text='Round whose certificate finalized the height.')),
                ('view_changes', models.IntegerField(default=0)),
                ('path', models.CharField(choices=[('collector', 'Collector'), ('speculative', 'Speculative'), ('fallback', 'Raw-share fallback'), ('unfinalized', 'Unfinalized')], max_length=20)),
                ('speculation', models.CharField(default='off', max_length=20)),
                ('consensus_units', models.BigIntegerField(default=0)),
                ('finalized_at', models.BigIntegerField(blank=True, null=True)),
                ('block_hash', models.CharField(blank=True, max_length=64)),
                ('malicious_prefix', models.IntegerField(default=0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='heights', to='scenarios.scenariorun')),
            ],
            options={
                'ordering': ['run', 'height'],
            },
        ),
        migrations.AddConstraint(
            model_name='heightoutcome',
            constraint=models.UniqueConstraint(fields=('run', 'height'), name='unique_height_per_run'),
        ),
    ]

# Generated by Django 4.2.6 on 2026-10-19 09:00

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SkillRegistry',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('root', models.CharField(max_length=1024, unique=True)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
        ),
        migrations.CreateModel(
            name='RegisteredSkill',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('skill_id', models.CharField(max_length=128)),
                ('path', models.CharField(max_length=1024)),
                ('env', models.JSONField(default=list)),
                ('task', models.JSONField(default=list)),
                ('r_perc', models.FloatField(blank=True, null=True)),
                ('task_kind', models.CharField(choices=[('flocking', 'Flocking'), ('adversarial', 'Adversarial')], max_length=20)),
                ('provenance', models.CharField(choices=[('trained', 'Trained from scratch'), ('fine-tuned', 'Fine-tuned from a parent skill')], default='trained', max_length=20)),
                ('placeholder', models.BooleanField(default=False)),
                ('file_hashes', models.JSONField(default=dict)),
                ('created', models.DateTimeField(auto_now_add=True)),
                ('parent', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.PROTECT, related_name='children', to='orchestrator.registeredskill')),
                ('registry', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='skills', to='orchestrator.skillregistry')),
            ],
            options={
                'ordering': ['registry', 'id'],
                'unique_together': {('registry', 'skill_id')},
            },
        ),
    ]

from django.apps import AppConfig


class SkillgraphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'skillgraph'

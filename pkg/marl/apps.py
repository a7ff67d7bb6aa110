from django.apps import AppConfig


class MarlConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'marl'

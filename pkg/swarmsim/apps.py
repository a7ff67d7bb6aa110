from django.apps import AppConfig


class SwarmsimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'swarmsim'

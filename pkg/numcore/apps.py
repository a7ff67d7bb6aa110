from django.apps import AppConfig


class NumcoreConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'numcore'

from django.apps import AppConfig


class CvarConfig(AppConfig):
    name = 'cvar'

from django.apps import AppConfig


class NuisanceConfig(AppConfig):
    name = 'nuisance'

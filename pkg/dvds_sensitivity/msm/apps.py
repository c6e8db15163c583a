from django.apps import AppConfig


class MsmConfig(AppConfig):
    name = 'msm'

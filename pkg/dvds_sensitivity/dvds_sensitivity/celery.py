import os
from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dvds_sensitivity.settings')

app = Celery('dvds_sensitivity')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()

import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dvds_sensitivity.settings')
django.setup()

from django.apps import AppConfig


class RobustOpsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'robust_ops'

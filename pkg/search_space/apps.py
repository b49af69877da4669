from django.apps import AppConfig


class SearchSpaceConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'search_space'
    verbose_name = "Espace de recherche"

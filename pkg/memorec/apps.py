from django.apps import AppConfig


class MemorecConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "memorec"
    verbose_name = "Memoization recommender toolkit"

    def ready(self):
        # Connect the artifact ledger and replay logging receivers
        from . import signals  # noqa: F401

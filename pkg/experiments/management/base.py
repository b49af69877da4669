from django.core.management.base import BaseCommand, CommandError

from config.exceptions import SearchError
from config.utils import parse_seed_list
from experiments.runner import load_run_config


class ExperimentCommand(BaseCommand):
    """Options communes : --config, --out, --seeds, --jobs"""
    config_required = True

    def add_arguments(self, parser):
        parser.add_argument('--config', required=self.config_required, help="Fichier de configuration JSON")
        parser.add_argument('--out', default=None, help="Dossier de sortie (remplace output_dir)")
        parser.add_argument('--seeds', default=None, help="Graines séparées par des virgules, ex. 0,1,2")
        parser.add_argument('--jobs', type=int, default=None, help="Nombre de processus")

    def load_config(self, options):
        try:
            seeds = parse_seed_list(options['seeds'])
        except ValueError:
            raise CommandError(f"--seeds: expected integers separated by commas, got '{options['seeds']}'")
        if options['jobs'] is not None and options['jobs'] < 1:
            raise CommandError("--jobs must be >= 1")
        try:
            return load_run_config(options['config'], output_dir=options['out'], seeds=seeds, jobs=options['jobs'])
        except SearchError as exc:
            raise CommandError(str(exc))

    def run_guarded(self, action, *args, **kwargs):
        """Les erreurs du domaine deviennent des CommandError (code de sortie non nul)"""
        try:
            return action(*args, **kwargs)
        except SearchError as exc:
            raise CommandError(str(exc))

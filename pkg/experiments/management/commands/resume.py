from django.conf import settings
from django.core.management.base import CommandError

from config.utils import seed_output_path
from experiments.management.base import ExperimentCommand
from experiments.runner import resume_search


class Command(ExperimentCommand):
    help = (
        "Reprend une recherche interrompue : --checkpoint pour une graine, "
        "ou --config pour toutes les graines de la configuration"
    )
    config_required = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', default=None, help="Chemin d'un checkpoint.json")

    def handle(self, *args, **options):
        if options['checkpoint']:
            paths = [options['checkpoint']]
        elif options['config']:
            run_config = self.load_config(options)
            paths = [
                seed_output_path(run_config.output_dir, seed, settings.ABANDIT['CHECKPOINT_NAME'])
                for seed in run_config.seeds
            ]
        else:
            raise CommandError("Either --checkpoint or --config is required")

        for path in paths:
            summary = self.run_guarded(resume_search, path, output_dir=options['out'])
            if summary is None:
                self.stdout.write(self.style.SUCCESS(f"{path}: search already finished, nothing to do"))
                continue
            self.stdout.write(self.style.SUCCESS(
                f"seed {summary.seed}: {summary.genotype} ({summary.evaluator_calls} evaluator calls)"
            ))

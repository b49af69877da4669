from django.core.management.base import CommandError

from experiments.management.base import ExperimentCommand
from experiments.models import SweepParameter
from experiments.runner import sweep_parameter


class Command(ExperimentCommand):
    help = "Balaye λ ou T et écrit la précision de récupération / le score par valeur"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--param', required=True, choices=SweepParameter.values)
        parser.add_argument(
            '--values', default=None,
            help="Valeurs séparées par des virgules (défaut : grille de ABANDIT)",
        )

    def handle(self, *args, **options):
        values = None
        if options['values'] is not None:
            values = [part.strip() for part in options['values'].split(',') if part.strip()]
            if not values:
                raise CommandError("--values: the sweep needs at least one value")
        run_config = self.load_config(options)
        table = self.run_guarded(sweep_parameter, run_config, options['param'], values)
        self.stdout.write(self.style.SUCCESS(
            f"Sweep over {options['param']} ({len(table)} values) written to {run_config.output_dir}"
        ))

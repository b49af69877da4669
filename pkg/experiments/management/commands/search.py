from experiments.management.base import ExperimentCommand
from experiments.runner import run_seeds


class Command(ExperimentCommand):
    help = "Lance la recherche anti-bandit pour chaque graine de la configuration"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--max-trials', type=int, default=None,
            help="Interrompt chaque graine après n essais en laissant un point de reprise",
        )

    def handle(self, *args, **options):
        run_config = self.load_config(options)
        summaries = self.run_guarded(run_seeds, run_config, max_trials=options['max_trials'])

        for seed, summary in zip(run_config.seeds, summaries):
            if summary is None:
                self.stdout.write(self.style.WARNING(
                    f"seed {seed}: interrupted, resume with --checkpoint "
                    f"{run_config.output_dir}/seed_{seed}/checkpoint.json"
                ))
                continue
            recovered = '' if summary.recovered_optimum is None else f", recovered_optimum={summary.recovered_optimum}"
            self.stdout.write(self.style.SUCCESS(
                f"seed {seed}: {summary.genotype} ({summary.evaluator_calls} evaluator calls{recovered})"
            ))

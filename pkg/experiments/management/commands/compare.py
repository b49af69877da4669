from experiments.management.base import ExperimentCommand
from experiments.runner import compare_strategies


class Command(ExperimentCommand):
    help = "Compare l'anti-bandit, UCBNAS, UCBNAS avec élagage et le tirage uniforme à budget égal"

    def handle(self, *args, **options):
        run_config = self.load_config(options)
        table = self.run_guarded(compare_strategies, run_config)
        for row in table.itertuples(index=False):
            self.stdout.write(
                f"{row.strategy:<15} recovery {row.recovery_rate:.3f} "
                f"[{row.ci_low:.3f}, {row.ci_high:.3f}]  score {row.mean_best_score:.4f}  "
                f"calls {row.mean_evaluator_calls:.0f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Comparison written to {run_config.output_dir}"))

from ...serializers import CoverageConfigSerializer
from ...services import (
    REPLICATION_COLUMNS,
    atomic_write,
    coverage_payload,
    records_path,
    render_csv,
    render_json,
    run_coverage,
)
from ..base import SensitivityCommand


class Command(SensitivityCommand):
    help = 'Monte Carlo coverage of the Wald region for the true sharp bounds of a built-in design.'

    def add_arguments(self, parser):
        parser.add_argument('--spec', required=True, help='paper_binary or paper_continuous.')
        parser.add_argument('--reps', type=int, required=True)
        parser.add_argument('--n', type=int, required=True)
        parser.add_argument('--oracle-nuisances', dest='oracle_nuisances', action='store_true',
                            help='Use the true nuisance functions instead of fitted learners.')
        parser.add_argument('--dispatch', default='local', help='local or celery.')
        parser.add_argument('--out', help='JSON report; standard output when omitted.')
        parser.add_argument('--records-out', dest='records_out',
                            help='Per-replication CSV; defaults to <out>_records.csv next to --out.')
        self.add_run_arguments(parser)

    def run(self, **options):
        data = self.run_settings(options)
        data.update({
            'spec': options['spec'],
            'reps': options['reps'],
            'n': options['n'],
            'oracle_nuisances': options['oracle_nuisances'],
            'dispatch': options['dispatch'],
            'out': options.get('out'),
            'records_out': options.get('records_out'),
        })
        config = self.load_config(CoverageConfigSerializer, data)
        report = run_coverage(config)

        records_out = config.records_out or (records_path(config.out) if config.out else None)
        if records_out:
            atomic_write(records_out, render_csv(report.records, REPLICATION_COLUMNS))
        self.emit(render_json(coverage_payload(report)), config.out)
        if options['verbosity'] > 0:
            for entry in report.entries:
                self.stderr.write(
                    f'lambda={entry.lam:g}: coverage {entry.coverage:.3f} over {entry.reps - entry.failures} replications'
                )

from ...serializers import AnalysisConfigSerializer
from ...services import render_analysis, run_analysis
from ..base import SensitivityCommand


class Command(SensitivityCommand):
    help = 'Estimate sensitivity bounds on a CSV dataset for one or more values of Λ.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='CSV file with a header row.')
        parser.add_argument('--treatment', required=True)
        parser.add_argument('--outcome', required=True)
        parser.add_argument('--covariates', default='rest', help='Comma-separated column names, or "rest".')
        kind = parser.add_mutually_exclusive_group()
        kind.add_argument('--binary', dest='outcome_kind', action='store_const', const='binary')
        kind.add_argument('--continuous', dest='outcome_kind', action='store_const', const='continuous')
        parser.add_argument('--out', help='Output file; standard output when omitted.')
        parser.add_argument('--format', default='json', help='json or csv.')
        self.add_run_arguments(parser)

    def run(self, **options):
        data = self.run_settings(options)
        data.update({
            'data': options['data'],
            'treatment': options['treatment'],
            'outcome': options['outcome'],
            'covariates': options['covariates'],
            'outcome_kind': options.get('outcome_kind'),
            'out': options.get('out'),
            'format': options['format'],
        })
        config = self.load_config(AnalysisConfigSerializer, data)
        dataset, records = run_analysis(config)
        self.emit(render_analysis(config, dataset, records), config.out)
        if config.out and options['verbosity'] > 0:
            self.stderr.write(f'Wrote {len(records)} records for n={dataset.n} to {config.out}')

from oracle.models import GenerativeSpec
from oracle.simulation import simulate

from ...services import render_dataset
from ..base import SensitivityCommand


class Command(SensitivityCommand):
    help = 'Draw a dataset from one of the built-in simulation designs.'

    def add_arguments(self, parser):
        parser.add_argument('--spec', required=True, help='paper_binary or paper_continuous.')
        parser.add_argument('--n', type=int, required=True)
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--out', help='Output CSV; standard output when omitted.')

    def run(self, **options):
        spec = GenerativeSpec.named(options['spec'])
        data = simulate(spec, options['n'], options['seed'])
        self.emit(render_dataset(data), options.get('out'))

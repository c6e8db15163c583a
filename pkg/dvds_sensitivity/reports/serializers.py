import math

from django.conf import settings
from rest_framework import serializers

from msm.models import Estimand
from msm.serializers import EnumChoiceField, OutcomeKindField
from oracle.coverage import DISPATCH_CHOICES
from oracle.models import PAPER_KINDS

from .models import AnalysisConfig, CoverageConfig, OutputFormat

# Grid points are rounded so that 1:2:0.1 gives 1.1 rather than 1.1000000000000001.
GRID_DECIMALS = 12


def parse_lambda_grid(text):
    """Expand ``start:stop:step`` into the inclusive list of grid points."""
    parts = text.split(':')
    if len(parts) != 3:
        raise serializers.ValidationError('Use start:stop:step.')
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError:
        raise serializers.ValidationError('Grid bounds and step must be numbers.') from None
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)) or step <= 0:
        raise serializers.ValidationError('The step must be a positive number.')
    if stop < start:
        raise serializers.ValidationError('The grid stop must not be below its start.')
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, GRID_DECIMALS) for i in range(count)]


class LambdaGridSerializer(serializers.Serializer):
    """Sensitivity levels given one by one, as a start:stop:step grid, or both."""
    lambdas = serializers.ListField(child=serializers.FloatField(), required=False)
    lambda_grid = serializers.CharField(required=False)

    def validate_lambda_grid(self, value):
        return parse_lambda_grid(value)

    def validate(self, attrs):
        values = list(attrs.pop('lambdas', [])) + list(attrs.pop('lambda_grid', []))
        if not values:
            raise serializers.ValidationError({'lambdas': 'Give at least one lambda value.'})
        bad = [value for value in values if not math.isfinite(value) or value < 1]
        if bad:
            raise serializers.ValidationError({'lambdas': f'Lambda values must be >= 1, got {bad[0]!r}.'})
        attrs['lambdas'] = tuple(sorted(set(values)))
        return attrs


class RunSettingsSerializer(LambdaGridSerializer):
    seed = serializers.IntegerField(min_value=0)
    folds = serializers.IntegerField(min_value=2, required=False)
    epsilon = serializers.FloatField(required=False)
    alpha = serializers.FloatField(required=False)
    estimand = EnumChoiceField(Estimand, required=False)
    learner_config = serializers.JSONField(required=False, allow_null=True)
    threads = serializers.IntegerField(min_value=1, required=False)

    def validate_epsilon(self, value):
        if not 0 < value < 0.5:
            raise serializers.ValidationError('Epsilon must lie in (0, 0.5).')
        return value

    def validate_alpha(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('Alpha must lie in (0, 1).')
        return value

    def validate_learner_config(self, value):
        if value is not None and not isinstance(value, dict):
            raise serializers.ValidationError('The learner config must be a JSON object.')
        return value

    def common(self, validated_data):
        return {
            'lambdas': validated_data['lambdas'],
            'seed': validated_data['seed'],
            'k': validated_data.get('folds', settings.DVDS_DEFAULT_FOLDS),
            'epsilon': validated_data.get('epsilon', settings.DVDS_DEFAULT_EPSILON),
            'alpha': validated_data.get('alpha', settings.DVDS_DEFAULT_ALPHA),
            'estimand': validated_data.get('estimand', Estimand.ATE),
            'learner_config': validated_data.get('learner_config'),
            'threads': validated_data.get('threads', settings.DVDS_DEFAULT_THREADS),
        }


class AnalysisConfigSerializer(RunSettingsSerializer):
    data = serializers.CharField()
    treatment = serializers.CharField()
    outcome = serializers.CharField()
    covariates = serializers.CharField(required=False)
    outcome_kind = OutcomeKindField(required=False, allow_null=True)
    out = serializers.CharField(required=False, allow_null=True)
    format = serializers.ChoiceField(choices=OutputFormat.CHOICES, required=False)

    def create(self, validated_data):
        return AnalysisConfig(
            data=validated_data['data'],
            treatment=validated_data['treatment'],
            outcome=validated_data['outcome'],
            covariates=validated_data.get('covariates', 'rest'),
            outcome_kind=validated_data.get('outcome_kind'),
            out=validated_data.get('out'),
            fmt=validated_data.get('format', OutputFormat.JSON),
            **self.common(validated_data),
        )


class CoverageConfigSerializer(RunSettingsSerializer):
    spec = serializers.CharField()
    reps = serializers.IntegerField(min_value=1)
    n = serializers.IntegerField(min_value=2)
    oracle_nuisances = serializers.BooleanField(required=False)
    dispatch = serializers.ChoiceField(choices=DISPATCH_CHOICES, required=False)
    out = serializers.CharField(required=False, allow_null=True)
    records_out = serializers.CharField(required=False, allow_null=True)

    def validate_spec(self, value):
        names = [kind.value for kind in PAPER_KINDS]
        if value not in names:
            raise serializers.ValidationError(f"Unknown simulation spec '{value}'; choose one of {', '.join(names)}.")
        return value

    def validate(self, attrs):
        attrs = super().validate(attrs)
        if attrs.get('dispatch') == 'celery' and attrs.get('oracle_nuisances'):
            raise serializers.ValidationError({'dispatch': 'Oracle nuisances cannot be sent to Celery workers.'})
        return attrs

    def create(self, validated_data):
        return CoverageConfig(
            spec_name=validated_data['spec'],
            reps=validated_data['reps'],
            n=validated_data['n'],
            oracle_nuisances=validated_data.get('oracle_nuisances', False),
            dispatch=validated_data.get('dispatch', 'local'),
            out=validated_data.get('out'),
            records_out=validated_data.get('records_out'),
            **self.common(validated_data),
        )

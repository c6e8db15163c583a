from rest_framework import serializers

from msm.models import OutcomeKind
from msm.serializers import EnumChoiceField

from .models import (
    PINBALL_DEFAULTS,
    FeatureExpansion,
    LearnerBundle,
    LearnerKind,
    LearnerSpec,
    RhoStrategy,
    default_bundle,
)

ALLOWED_KINDS = {
    'propensity': {LearnerKind.LOGISTIC, LearnerKind.CONSTANT},
    'quantile': {LearnerKind.PINBALL_LINEAR, LearnerKind.CONSTANT},
    'regression': {LearnerKind.RIDGE, LearnerKind.LOGISTIC, LearnerKind.CONSTANT},
}


class LearnerSpecSerializer(serializers.Serializer):
    # Injected oracles are Python callables and cannot come from a config file.
    kind = EnumChoiceField(LearnerKind, exclude=(LearnerKind.ORACLE_INJECTION,))
    regularization = serializers.FloatField(min_value=0, required=False)
    max_iter = serializers.IntegerField(min_value=1, required=False)
    tol = serializers.FloatField(required=False)
    feature_expansion = EnumChoiceField(FeatureExpansion, source='expansion', required=False)

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError('Tolerance must be positive.')
        return value

    def create(self, validated_data):
        if validated_data['kind'] is LearnerKind.PINBALL_LINEAR:
            validated_data = {**PINBALL_DEFAULTS, **validated_data}
        return LearnerSpec(**validated_data)


class LearnerBundleSerializer(serializers.Serializer):
    """Reads a ``--learner-config`` document.

    Missing slots fall back to the defaults for the outcome kind given in
    ``context['outcome_kind']``.
    """
    propensity = LearnerSpecSerializer(required=False)
    quantile = LearnerSpecSerializer(required=False)
    regression = LearnerSpecSerializer(required=False)
    strategy = EnumChoiceField(RhoStrategy, required=False)

    def validate(self, attrs):
        errors = {}
        for slot, allowed in ALLOWED_KINDS.items():
            if slot in attrs and attrs[slot]['kind'] not in allowed:
                names = ', '.join(sorted(kind.value for kind in allowed))
                errors[slot] = f'{attrs[slot]["kind"].value} is not available here; choose one of {names}.'
        outcome_kind = OutcomeKind(self.context.get('outcome_kind', OutcomeKind.CONTINUOUS))
        regression = attrs.get('regression')
        if outcome_kind is OutcomeKind.CONTINUOUS and regression and regression['kind'] is LearnerKind.LOGISTIC:
            errors['regression'] = 'logistic regression needs a binary outcome; choose ridge or constant.'
        if errors:
            raise serializers.ValidationError(errors)
        return attrs

    def create(self, validated_data):
        defaults = default_bundle(self.context.get('outcome_kind', OutcomeKind.CONTINUOUS))
        slots = {}
        for slot in ('propensity', 'quantile', 'regression'):
            if slot in validated_data:
                slots[slot] = LearnerSpecSerializer().create(validated_data[slot])
            else:
                slots[slot] = getattr(defaults, slot)
        return LearnerBundle(strategy=validated_data.get('strategy', defaults.strategy), **slots)

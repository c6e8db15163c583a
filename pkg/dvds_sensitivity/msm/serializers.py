from rest_framework import serializers

from .models import ColumnRoles, OutcomeKind


class ColumnRolesSerializer(serializers.Serializer):
    """Assigns table columns to the treatment, outcome and covariate roles.

    ``covariates`` is either a list of column names or the string ``"rest"``,
    meaning every column not used as treatment or outcome.
    """
    treatment = serializers.CharField()
    outcome = serializers.CharField()
    covariates = serializers.JSONField()

    def __init__(self, *args, columns=(), **kwargs):
        super().__init__(*args, **kwargs)
        self.columns = list(columns)

    def validate_covariates(self, value):
        if isinstance(value, str):
            if value != 'rest':
                value = [name.strip() for name in value.split(',') if name.strip()]
        elif not isinstance(value, (list, tuple)) or not all(isinstance(name, str) for name in value):
            raise serializers.ValidationError('Covariates must be a list of column names or "rest".')
        return value

    def validate(self, attrs):
        treatment, outcome = attrs['treatment'], attrs['outcome']
        if treatment == outcome:
            raise serializers.ValidationError({'outcome': 'Outcome and treatment must be different columns.'})
        missing = {}
        for role in ('treatment', 'outcome'):
            if attrs[role] not in self.columns:
                missing[role] = f"Column '{attrs[role]}' is not in the table."
        if missing:
            raise serializers.ValidationError(missing)

        covariates = attrs['covariates']
        if covariates == 'rest':
            covariates = [name for name in self.columns if name not in (treatment, outcome)]
        unknown = [name for name in covariates if name not in self.columns]
        if unknown:
            raise serializers.ValidationError(
                {'covariates': f"Columns not in the table: {', '.join(unknown)}."}
            )
        if treatment in covariates or outcome in covariates:
            raise serializers.ValidationError({'covariates': 'Covariates cannot include the treatment or outcome.'})
        if len(set(covariates)) != len(covariates):
            raise serializers.ValidationError({'covariates': 'Covariates are listed more than once.'})
        if not covariates:
            raise serializers.ValidationError({'covariates': 'At least one covariate column is required.'})
        attrs['covariates'] = tuple(covariates)
        return attrs

    def create(self, validated_data):
        return ColumnRoles(**validated_data)


class EnumChoiceField(serializers.ChoiceField):
    """A ChoiceField over the values of a str Enum that yields enum members."""

    def __init__(self, enum_cls, exclude=(), **kwargs):
        self.enum_cls = enum_cls
        choices = [member.value for member in enum_cls if member not in exclude]
        super().__init__(choices=choices, **kwargs)

    def to_internal_value(self, data):
        return self.enum_cls(super().to_internal_value(data))

    def to_representation(self, value):
        return self.enum_cls(value).value


class OutcomeKindField(EnumChoiceField):
    def __init__(self, **kwargs):
        super().__init__(OutcomeKind, **kwargs)

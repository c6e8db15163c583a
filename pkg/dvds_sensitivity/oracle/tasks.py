from celery import shared_task

from msm.exceptions import SensitivityError
from nuisance.serializers import LearnerBundleSerializer

from .models import GenerativeSpec
from .replication import run_replication


@shared_task
def run_coverage_replication(spec_name, lambdas, n, learner_config, k, alpha, seed, estimand, epsilon):
    """
    Run one coverage replication for a built-in design.

    Learners arrive as a learner-config document so the arguments stay JSON.
    Returns ``{'records': [...]}`` or ``{'error': message}``.
    """
    spec = GenerativeSpec.named(spec_name)
    serializer = LearnerBundleSerializer(data=learner_config or {}, context={'outcome_kind': spec.outcome_kind})
    serializer.is_valid(raise_exception=True)
    bundle = serializer.save()
    try:
        records = run_replication(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon)
    except SensitivityError as e:
        return {'error': str(e)}
    return {'records': records}

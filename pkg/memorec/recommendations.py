"""
Recommendation files, shared by both recommenders.

    {"format": "memorec-recommendations", "version": 1, "source": "APL",
     "recommendations": [{"method": ..., "score": ..., "whitelist": [[rendering, ...], ...] | null,
                          "hint": {"scope": ..., "size": ..., "getter": ...} | null, "subsumes": [...]}]}
"""
from .exceptions import DocumentError
from .models import CacheImplHint, Recommendation, RecommendationSet
from .serializers import RecommendationDocumentSerializer
from .trace_model import CanonicalValue
from .utils import load_json_document, write_json

RECOMMENDATIONS_FORMAT = 'memorec-recommendations'


def recommendation_document(recommendations):
    items = []
    for rec in recommendations:
        whitelist = None
        if rec.whitelist is not None:
            whitelist = sorted([value.rendering for value in inputs] for inputs in rec.whitelist)
        hint = None
        if rec.hint is not None:
            hint = {'scope': str(rec.hint.scope), 'size': str(rec.hint.size), 'getter': rec.hint.getter}
        items.append({
            'method': rec.method,
            'score': rec.score,
            'whitelist': whitelist,
            'hint': hint,
            'subsumes': list(rec.subsumes),
        })
    return {
        'format': RECOMMENDATIONS_FORMAT,
        'version': 1,
        'source': str(recommendations.source),
        'recommendations': items,
    }


def write_recommendations(recommendations, path):
    return write_json(path, recommendation_document(recommendations))


def load_recommendations(document):
    serializer = RecommendationDocumentSerializer(data=load_json_document(document, 'recommendation file'))
    if not serializer.is_valid():
        raise DocumentError('recommendation file', serializer.errors)
    data = serializer.validated_data
    source = str(data['source'])
    recommendations = []
    for item in data['recommendations']:
        whitelist = None
        if item['whitelist'] is not None:
            whitelist = frozenset(tuple(CanonicalValue(text) for text in inputs) for inputs in item['whitelist'])
        hint = None
        if item['hint'] is not None:
            hint = CacheImplHint(
                scope=str(item['hint']['scope']), size=str(item['hint']['size']), getter=item['hint']['getter'],
            )
        try:
            recommendations.append(Recommendation(
                method=item['method'],
                score=item['score'],
                source=source,
                whitelist=whitelist,
                hint=hint,
                subsumes=tuple(item['subsumes']),
            ))
        except ValueError as exc:
            raise DocumentError('recommendation file', str(exc)) from exc
    return RecommendationSet(source, tuple(recommendations))

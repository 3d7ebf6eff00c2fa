"""
Validation of every JSON document the toolkit reads.

The serializers only check shape and field types; semantic checks (dangling
vertices, cyclic prerequisites, unknown requests) live in the owning modules.
"""
from django.core.validators import ProhibitNullCharactersValidator
from rest_framework import serializers

from .models import Admission, Behavior, Category, RequestKind, Scope, Size, Source, SideEffect
from .trace_model import TRACE_FORMAT, CallRecord, CanonicalValue


class RenderingField(serializers.CharField):
    """Text carried through verbatim: no trimming, and NUL characters are kept."""

    def __init__(self, **kwargs):
        kwargs.setdefault('allow_blank', True)
        kwargs.setdefault('trim_whitespace', False)
        super().__init__(**kwargs)
        self.validators = [v for v in self.validators if not isinstance(v, ProhibitNullCharactersValidator)]


class TraceHeaderSerializer(serializers.Serializer):
    format = serializers.ChoiceField(choices=[TRACE_FORMAT])
    version = serializers.IntegerField(min_value=1, max_value=1)
    epoch_ns = serializers.IntegerField()


class CallRecordSerializer(serializers.Serializer):
    session = RenderingField(allow_blank=False)
    method = RenderingField(allow_blank=False)
    inputs = serializers.ListField(child=RenderingField(), allow_empty=True)
    output = RenderingField()
    start_ns = serializers.IntegerField()
    end_ns = serializers.IntegerField()
    depth = serializers.IntegerField(min_value=0)

    def validate(self, data):
        if data['end_ns'] < data['start_ns']:
            raise serializers.ValidationError("end_ns precedes start_ns.")
        return data

    def to_record(self, line=None):
        data = self.validated_data
        return CallRecord(
            session=data['session'],
            method=data['method'],
            inputs=tuple(CanonicalValue(text) for text in data['inputs']),
            output=CanonicalValue(data['output']),
            start=data['start_ns'],
            end=data['end_ns'],
            depth=data['depth'],
            line=line,
        )


class VertexSerializer(serializers.Serializer):
    id = serializers.CharField()
    kind = serializers.ChoiceField(choices=RequestKind.choices)


class EdgeListField(serializers.ListField):
    child = serializers.ListField(child=serializers.CharField(), min_length=2, max_length=2)


class NavigationSerializer(serializers.Serializer):
    vertices = VertexSerializer(many=True, allow_empty=False)
    next = EdgeListField(required=False, default=list)
    requires = EdgeListField(required=False, default=list)
    entries = serializers.ListField(child=serializers.CharField(), required=False, allow_null=True, default=None)

    def validate_vertices(self, value):
        ids = [vertex['id'] for vertex in value]
        duplicates = sorted({vid for vid in ids if ids.count(vid) > 1})
        if duplicates:
            raise serializers.ValidationError(f"Duplicate request ids: {', '.join(duplicates)}.")
        return value


class MethodNodeSerializer(serializers.Serializer):
    method = serializers.CharField()
    behavior = serializers.ChoiceField(choices=Behavior.choices)
    period_ns = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    category = serializers.ChoiceField(choices=SideEffect.choices, required=False, allow_null=True, default=None)
    cost_ns = serializers.IntegerField(min_value=0)
    inputs = serializers.ListField(child=serializers.CharField(), required=False, default=list)
    fn = serializers.ChoiceField(
        choices=['digest', 'identity', 'increment', 'length', 'concat'], required=False, default='digest'
    )
    returns = serializers.ChoiceField(choices=['value', 'constant', 'counter'], required=False, default='value')
    children = serializers.ListField(child=serializers.DictField(), required=False, default=list)

    def validate_children(self, value):
        validated = []
        for child in value:
            serializer = MethodNodeSerializer(data=child)
            serializer.is_valid(raise_exception=True)
            validated.append(serializer.validated_data)
        return validated

    def validate(self, data):
        behavior = data['behavior']
        if behavior == Behavior.TIME_VARYING and not data.get('period_ns'):
            raise serializers.ValidationError(f"{data['method']}: time-varying nodes need period_ns.")
        if behavior == Behavior.SIDE_EFFECTING and not data.get('category'):
            raise serializers.ValidationError(f"{data['method']}: side-effecting nodes need a category.")
        if behavior == Behavior.GETTER and data.get('inputs'):
            raise serializers.ValidationError(f"{data['method']}: getter nodes take no inputs.")
        return data


class RequestModelSerializer(serializers.Serializer):
    params = serializers.DictField(child=serializers.ListField(allow_empty=False), required=False, default=dict)
    calls = serializers.ListField(child=serializers.DictField(), allow_empty=False)

    def validate_calls(self, value):
        return MethodNodeSerializer().validate_children(value)


class DevCacheEntrySerializer(serializers.Serializer):
    method = serializers.CharField()
    ttl_ns = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    admission = serializers.ChoiceField(
        choices=[Admission.ALL_INPUTS, Admission.SINGLE_INSTANCE], required=False, default=Admission.ALL_INPUTS
    )


class AppSpecSerializer(serializers.Serializer):
    requests = serializers.DictField(child=serializers.DictField(), allow_empty=False)
    developer_cache = DevCacheEntrySerializer(many=True, required=False, default=list)

    def validate_requests(self, value):
        validated = {}
        for request_id, body in value.items():
            serializer = RequestModelSerializer(data=body)
            if not serializer.is_valid():
                raise serializers.ValidationError({request_id: serializer.errors})
            validated[request_id] = serializer.validated_data
        return validated


class DevPlanSerializer(serializers.Serializer):
    format = serializers.ChoiceField(choices=['memorec-dev-plan'])
    default_ttl_ns = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    methods = DevCacheEntrySerializer(many=True)


class RequestLogHeaderSerializer(serializers.Serializer):
    format = serializers.ChoiceField(choices=['memorec-requests'])
    version = serializers.IntegerField(min_value=1, max_value=1)
    seed = serializers.IntegerField()


class RequestEntrySerializer(serializers.Serializer):
    user = serializers.IntegerField(min_value=0)
    session = serializers.CharField()
    request = serializers.CharField()
    params = serializers.DictField(child=serializers.JSONField(), required=False, default=dict)
    issued_ns = serializers.IntegerField(min_value=0)


class HintSerializer(serializers.Serializer):
    scope = serializers.ChoiceField(choices=Scope.choices)
    size = serializers.ChoiceField(choices=Size.choices)
    getter = serializers.BooleanField()


class RecommendationSerializer(serializers.Serializer):
    method = serializers.CharField()
    score = serializers.FloatField()
    whitelist = serializers.ListField(
        child=serializers.ListField(child=RenderingField(), allow_empty=True),
        allow_null=True, required=False, default=None, allow_empty=False,
    )
    hint = HintSerializer(allow_null=True, required=False, default=None)
    subsumes = serializers.ListField(child=serializers.CharField(), required=False, default=list)


class RecommendationDocumentSerializer(serializers.Serializer):
    format = serializers.ChoiceField(choices=['memorec-recommendations'])
    version = serializers.IntegerField(min_value=1, max_value=1)
    source = serializers.ChoiceField(choices=Source.choices)
    recommendations = RecommendationSerializer(many=True)


class PurityManifestSerializer(serializers.Serializer):
    methods = serializers.DictField(child=serializers.ChoiceField(choices=Category.choices))

import threading

import pytest

from linediag.cards import AgentCard, PostprocessRule, Trigger
from linediag.errors import (
    ChainMappingError,
    ConflictError,
    InvalidCard,
    NoAgentForCapability,
    UnknownTask,
    ValidationError,
)
from linediag.protocol import CPA, EventStore, InvokeRequest, Registry


class EchoAgent:
    def run(self, payload, context):
        return {"echo": dict(payload)}


def make_card(name="echo", caps=("preprocessing",), rules=(), endpoint=None):
    return AgentCard(
        name=name,
        version="1.0",
        endpoint=endpoint or f"inproc://{name}",
        capabilities=list(caps),
        input_schema={"fields": ["data_ref"]},
        output_schema={"fields": ["echo", "status", "payload"]},
        postprocess_rules=list(rules),
    )


@pytest.fixture
def stack():
    registry = Registry()
    events = EventStore()
    return registry, events, CPA(registry, events)


class TestRegistry:
    def test_register_then_discover(self, stack):
        registry, _, _ = stack
        registry.register(make_card("pre", ["preprocessing"]), handler=EchoAgent())
        found = registry.find_by_capability("preprocessing")
        assert [c.name for c in found] == ["pre"]

    def test_reregister_same_name_version_is_idempotent(self, stack):
        registry, _, _ = stack
        card = make_card("pre")
        registry.register(card, handler=EchoAgent())
        registry.register(card, handler=EchoAgent())
        assert len(registry) == 1

    def test_empty_capabilities_rejected(self, stack):
        registry, _, _ = stack
        with pytest.raises(InvalidCard):
            registry.register(make_card("bad", caps=()))

    def test_conflicting_schema_rejected(self, stack):
        registry, _, _ = stack
        registry.register(make_card("pre"))
        other = make_card("pre")
        other.output_schema = {"fields": ["different"]}
        with pytest.raises(ConflictError):
            registry.register(other)

    def test_capability_order_is_registration_order(self, stack):
        registry, _, _ = stack
        registry.register(make_card("first", ["anomaly"]), handler=EchoAgent())
        registry.register(make_card("second", ["anomaly"]), handler=EchoAgent())
        assert [c.name for c in registry.find_by_capability("anomaly")] == ["first", "second"]

    def test_unknown_tag_gives_empty_list(self, stack):
        assert stack[0].find_by_capability("nonexistent") == []

    def test_invalid_endpoint(self):
        with pytest.raises(InvalidCard):
            make_card("bad", endpoint="not a url at all ").validate()

    def test_register_list_stress_100_threads(self, stack):
        registry, _, _ = stack
        errors = []

        def flow(i):
            try:
                registry.register(make_card(f"agent-{i}", [f"cap-{i % 7}"]), handler=EchoAgent())
                visible = registry.find_by_capability(f"cap-{i % 7}")
                assert any(c.name == f"agent-{i}" for c in visible)
            except Exception as e:
                errors.append(e)

        threads = [threading.Thread(target=flow, args=(i,)) for i in range(100)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(registry) == 100


class TestDispatch:
    def test_roundtrip_with_events(self, stack):
        registry, events, cpa = stack
        registry.register(make_card("pre"), handler=EchoAgent())
        out = cpa.dispatch(InvokeRequest("t1", "preprocessing", {"file": "run.csv"}))
        assert out["agent"] == "pre"
        assert out["result"]["echo"]["file"] == "run.csv"
        kinds = [e.kind for e in events.snapshot("t1")]
        assert kinds == ["Started", "Result"]

    def test_no_agent_for_capability(self, stack):
        _, _, cpa = stack
        with pytest.raises(NoAgentForCapability):
            cpa.dispatch(InvokeRequest("t1", "nonexistent", {}))

    def test_context_fills_missing_data_ref(self, stack):
        registry, _, cpa = stack
        registry.register(make_card("pre"), handler=EchoAgent())
        out = cpa.dispatch(
            InvokeRequest("t2", "preprocessing", {}, context={"data_ref": "run.csv"})
        )
        assert out["result"]["echo"]["data_ref"].endswith("run.csv")

    def test_payload_not_mutated(self, stack):
        registry, _, cpa = stack
        registry.register(make_card("pre"), handler=EchoAgent())
        payload = {"file": "x.csv", "nested": {"a": 1}}
        cpa.dispatch(InvokeRequest("t3", "preprocessing", payload, context={"data_ref": "y.csv"}))
        assert payload == {"file": "x.csv", "nested": {"a": 1}}

    def test_task_id_reuse_rejected(self, stack):
        registry, _, cpa = stack
        registry.register(make_card("pre"), handler=EchoAgent())
        cpa.dispatch(InvokeRequest("dup", "preprocessing", {}))
        with pytest.raises(ValidationError):
            cpa.dispatch(InvokeRequest("dup", "preprocessing", {}))

    def test_agent_error_becomes_error_event(self, stack):
        registry, events, cpa = stack

        class Boom:
            def run(self, payload, context):
                raise RuntimeError("nope")

        registry.register(make_card("boom", ["anomaly"]), handler=Boom())
        with pytest.raises(RuntimeError):
            cpa.dispatch(InvokeRequest("t4", "anomaly", {}))
        kinds = [e.kind for e in events.snapshot("t4")]
        assert kinds == ["Started", "Error"]


class TestEvents:
    def test_replay_from_start(self):
        events = EventStore()
        events.publish("t", "Started", {})
        events.publish("t", "Progress", {"pct": 50})
        events.publish("t", "Result", {})
        seen = list(events.stream("t"))
        assert [e.seq for e in seen] == [1, 2, 3]
        assert [e.kind for e in seen] == ["Started", "Progress", "Result"]

    def test_first_event_has_seq_1(self):
        events = EventStore()
        ev = events.publish("t", "Started", {})
        assert ev.seq == 1

    def test_unknown_task(self):
        with pytest.raises(UnknownTask):
            EventStore().snapshot("ghost")
        with pytest.raises(UnknownTask):
            list(EventStore().stream("ghost"))

    def test_single_terminal_enforced(self):
        events = EventStore()
        events.publish("t", "Result", {})
        with pytest.raises(ValidationError):
            events.publish("t", "Progress", {})

    def test_concurrent_publishers_keep_contiguous_seq(self):
        events = EventStore()
        n_threads, per_thread = 20, 50

        def publisher(k):
            for _ in range(per_thread):
                events.publish(f"task-{k % 5}", "Progress", {})

        threads = [threading.Thread(target=publisher, args=(k,)) for k in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for k in range(5):
            seqs = [e.seq for e in events.snapshot(f"task-{k}")]
            assert seqs == list(range(1, len(seqs) + 1))

    def test_live_subscriber_sees_replay_then_live(self):
        events = EventStore()
        events.publish("t", "Started", {})
        collected = []

        def consume():
            collected.extend(events.stream("t", max_wait_s=5))

        consumer = threading.Thread(target=consume)
        consumer.start()
        events.publish("t", "Progress", {})
        events.publish("t", "Result", {})
        consumer.join(timeout=5)
        assert [e.seq for e in collected] == [1, 2, 3]


class TestPostprocessChain:
    def test_matching_rule_emits_request(self, stack):
        _, events, cpa = stack
        rule = PostprocessRule(
            trigger=Trigger("status", "ne", "Normal"),
            next_capability="rca",
            input_mapping={"payload.event": "event_ref"},
            auto_chain=True,
        )
        card = make_card("anom", ["anomaly"], rules=[rule])
        reqs = cpa.build_chain_requests(card, {"status": "Spike", "payload": {"event": "row:3"}}, {})
        assert len(reqs) == 1
        assert reqs[0].capability == "rca"
        assert reqs[0].payload == {"event_ref": "row:3"}

    def test_normal_status_triggers_nothing(self, stack):
        _, _, cpa = stack
        rule = PostprocessRule(Trigger("status", "ne", "Normal"), "rca", {}, auto_chain=True)
        card = make_card("anom", ["anomaly"], rules=[rule])
        assert cpa.build_chain_requests(card, {"status": "Normal"}, {}) == []

    def test_two_matching_rules_fire_in_card_order(self, stack):
        _, _, cpa = stack
        rules = [
            PostprocessRule(Trigger("status", "exists"), "rca", {}, auto_chain=True),
            PostprocessRule(Trigger("status", "exists"), "recommend", {}, auto_chain=True),
        ]
        card = make_card("anom", ["anomaly"], rules=rules)
        reqs = cpa.build_chain_requests(card, {"status": "x"}, {})
        assert [r.capability for r in reqs] == ["rca", "recommend"]

    def test_missing_mapped_field_skips_rule_and_events_error(self, stack):
        _, events, cpa = stack
        rule = PostprocessRule(
            Trigger("status", "exists"), "rca", {"payload.missing": "x"}, auto_chain=True
        )
        card = make_card("anom", ["anomaly"], rules=[rule])
        reqs = cpa.build_chain_requests(card, {"status": "s", "payload": {}}, {})
        assert reqs == []
        error_events = [
            e
            for tid in list(events._events)
            for e in events.snapshot(tid)
            if e.kind == "Error" and e.body.get("type") == ChainMappingError.__name__
        ]
        assert len(error_events) == 1

    def test_non_auto_chain_rules_ignored(self, stack):
        _, _, cpa = stack
        rule = PostprocessRule(Trigger("status", "exists"), "rca", {}, auto_chain=False)
        card = make_card("anom", ["anomaly"], rules=[rule])
        assert cpa.build_chain_requests(card, {"status": "s"}, {}) == []

"""Scenario engine: parsing, determinism, goal checking, bundled runs."""

import pytest

from chainmeet import sim
from chainmeet.errors import MalformedScenario, Reason
from chainmeet.meeting import ReassignRule


def run_bundled(name, seed=None):
    text = sim.load_scenario_text(name)
    if seed is not None:
        scenario = sim.parse_scenario(text)
        scenario = sim.Scenario(seed, scenario.rule, scenario.actors, scenario.events)
        return sim.run_scenario(scenario)
    return sim.run_scenario_text(text)


def events_of(simulation, kind):
    return [e for e in simulation.transcript if isinstance(e, kind)]


# ---------------------------------------------------------------------------
# scenario parsing


def test_parse_scenario_full_grammar():
    scenario = sim.parse_scenario(
        """
        # comment line
        seed 42
        rule timeorder
        actor alice laptop
        actor mallory lair adversary   # trailing comment
        tick 1 alice publish kick off
        tick 3 mallory adversary.eavesdrop
        """
    )
    assert scenario.seed == 42
    assert scenario.rule is ReassignRule.TIME_ORDER
    assert [a.user for a in scenario.actors] == ["alice", "mallory"]
    assert scenario.actors[1].adversary
    assert scenario.events[0] == sim.ScriptedEvent(1, "alice", "publish", ("kick", "off"))


@pytest.mark.parametrize(
    "text",
    [
        "actor alice laptop\nbogus directive",
        "actor alice laptop\nseed notanumber",
        "actor alice laptop\nseed 18446744073709551616",  # 2**64
        "actor alice laptop\nrule dictatorship",
        "actor alice laptop\nactor alice phone",  # duplicate user
        "actor alice laptop friend",  # bad flag
        "actor alice laptop\ntick 1 ghost publish",  # unknown actor
        "actor alice laptop\ntick 1 alice teleport",  # unknown action
        "actor alice laptop\ntick 1 alice publish\ntick 1 alice publish",
        "actor alice laptop\ntick 2 alice publish\ntick 1 alice leave",
        "actor alice laptop\ntick 1 alice adversary.eavesdrop",  # not flagged
        "",  # no actors at all
    ],
)
def test_parse_scenario_rejects_malformed(text):
    with pytest.raises(MalformedScenario):
        sim.parse_scenario(text)


def test_bundled_scenarios_present_and_loadable():
    names = sim.bundled_scenario_names()
    for expected in (
        "honest", "leave_rekey", "join_rekey", "reassign_designation",
        "reassign_timeorder", "reassign_violation", "impersonate",
        "tamper_ledger", "mix_keys", "replay_request", "eavesdrop",
    ):
        assert expected in names
        sim.parse_scenario(sim.load_scenario_text(expected))
    with pytest.raises(FileNotFoundError):
        sim.load_scenario_text("no_such_scenario")


# ---------------------------------------------------------------------------
# determinism


def test_same_seed_same_transcript_bytes():
    first = sim.render_transcript(run_bundled("leave_rekey"))
    second = sim.render_transcript(run_bundled("leave_rekey"))
    assert first == second


def test_different_seed_different_bytes_same_verdict():
    base = run_bundled("honest")
    other = run_bundled("honest", seed=987654321)
    base_text = sim.render_transcript(base)
    other_text = sim.render_transcript(other)
    assert base_text != other_text
    assert base.report.ok and other.report.ok


# ---------------------------------------------------------------------------
# bundled scenario behaviour


def test_honest_run_everyone_reads_everything():
    simulation = run_bundled("honest")
    assert simulation.report.ok
    packets = events_of(simulation, sim.PacketEvent)
    decrypts = events_of(simulation, sim.DecryptEvent)
    assert len(packets) == 100
    assert {p.stream for p in packets} == {1, 2, 3}
    plain = [d for d in decrypts if not d.tampered]
    assert plain and all(d.ok for d in plain)
    probes = [d for d in decrypts if d.tampered]
    assert probes and not any(d.ok for d in probes)


def test_leave_rekey_locks_out_the_departed():
    simulation = run_bundled("leave_rekey")
    assert simulation.report.ok
    ghost_tries = [
        d for d in events_of(simulation, sim.DecryptEvent)
        if d.ghost and d.epoch > d.epoch_at_leave
    ]
    assert len(ghost_tries) >= 3  # the check must actually have had material
    assert not any(d.ok for d in ghost_tries)
    departures = events_of(simulation, sim.DepartureEvent)
    assert [(d.actor, d.epoch_at_leave) for d in departures] == [("bob", 0)]


def test_join_rekey_advances_the_epoch_for_the_newcomer():
    simulation = run_bundled("join_rekey")
    assert simulation.report.ok
    epochs = [e.epoch for e in events_of(simulation, sim.KeyEpochEvent)]
    assert epochs == [0, 1]
    carol_reads = [
        d for d in events_of(simulation, sim.DecryptEvent)
        if d.actor == "carol" and not d.tampered
    ]
    assert carol_reads and all(d.ok and d.epoch == 1 for d in carol_reads)


def test_reassign_rules_converge_on_the_same_leader():
    designated = run_bundled("reassign_designation")
    ordered = run_bundled("reassign_timeorder")
    assert designated.report.ok and ordered.report.ok
    final_d = events_of(designated, sim.KeyEpochEvent)[-1]
    final_t = events_of(ordered, sim.KeyEpochEvent)[-1]
    assert final_d.leader == final_t.leader == "bob"
    # same seed, so the two rules elect the identical principal
    assert final_d.leader_ivk == final_t.leader_ivk
    assert designated.meeting_ledger.verify_chain()
    assert ordered.meeting_ledger.verify_chain()


def test_violation_rejected_by_every_honest_validator():
    simulation = run_bundled("reassign_violation")
    assert simulation.report.ok
    grabs = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "leadership_grab"
    ]
    assert len(grabs) == 1 and grabs[0].failed
    verdicts = [
        v for v in events_of(simulation, sim.ValidateEvent)
        if v.tag == "LEADER_REASSIGN" and v.tick == grabs[0].tick
    ]
    honest = [a.user for a in simulation.scenario.actors if not a.adversary]
    assert sorted(v.validator for v in verdicts) == sorted(honest)
    assert all(v.reason == Reason.RULE_VIOLATION for v in verdicts)
    # the lawful handover afterwards still went through
    reassigns = [
        t for t in events_of(simulation, sim.TxEvent)
        if t.tag == "LEADER_REASSIGN" and t.ok
    ]
    assert len(reassigns) == 1 and reassigns[0].actor == "alice"


def test_impersonation_denied_while_the_real_user_joins():
    simulation = run_bundled("impersonate")
    assert simulation.report.ok
    attack = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "impersonate"
    ]
    assert len(attack) == 1 and attack[0].failed
    reviews = events_of(simulation, sim.ReviewEvent)
    granted = [r for r in reviews if r.granted]
    denied = [r for r in reviews if not r.granted]
    assert [r.subject_user for r in granted] == ["victim"]
    assert [(r.subject_user, r.verdict) for r in denied] == [
        ("victim", Reason.KEY_MISMATCH)
    ]


def test_ledger_tampering_always_detected():
    simulation = run_bundled("tamper_ledger")
    assert simulation.report.ok
    attempts = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "tamper_ledger"
    ]
    assert len(attempts) == 3
    assert all(e.failed for e in attempts)
    assert simulation.meeting_ledger.verify_chain()  # the real chain is unhurt


def test_mix_keys_rejected_without_touching_the_victim():
    simulation = run_bundled("mix_keys")
    assert simulation.report.ok
    attack = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "mix_keys"
    ]
    assert len(attack) == 1 and attack[0].failed
    assert "rejected=3" in attack[0].detail and "key_untouched=1" in attack[0].detail
    # the victim keeps using both meetings afterwards
    after = [
        p for p in events_of(simulation, sim.PacketEvent)
        if p.tick > attack[0].tick and p.sender == "bob"
    ]
    assert {p.meeting for p in after} == {0, 1}


def test_replayed_request_cannot_reenrol_a_departed_member():
    simulation = run_bundled("replay_request")
    assert simulation.report.ok
    attack = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "replay_request"
    ]
    assert len(attack) == 1 and attack[0].failed
    rejected = [
        t for t in events_of(simulation, sim.TxEvent)
        if t.action == "replay_request"
    ]
    assert rejected[0].reason == Reason.REPLAYED_REQUEST
    ghost_tries = [
        d for d in events_of(simulation, sim.DecryptEvent)
        if d.ghost and d.epoch > d.epoch_at_leave
    ]
    assert ghost_tries and not any(d.ok for d in ghost_tries)


def test_eavesdropper_recovers_nothing():
    simulation = run_bundled("eavesdrop")
    assert simulation.report.ok
    attempts = [
        e for e in events_of(simulation, sim.AdversaryEvent)
        if e.attack == "eavesdrop"
    ]
    assert len(attempts) >= 3
    assert all(e.failed for e in attempts)
    assert all("recovered=0" in e.detail for e in attempts)


# ---------------------------------------------------------------------------
# the checker itself must catch fabricated violations


def fabricated_epoch(meeting=0, epoch=0, recipients=(b"R" * 32,)):
    return sim.KeyEpochEvent(
        tick=1, meeting=meeting, epoch=epoch, leader="alice",
        leader_ivk=b"L" * 32, recipients=recipients, key_digest=b"K" * 32,
    )


def fabricated_decrypt(**kwargs):
    base = dict(
        tick=2, actor="zed", meeting=0, stream=1, epoch=0, counter=0,
        ok=True, actor_ivk=b"Z" * 32,
    )
    base.update(kwargs)
    return sim.DecryptEvent(**base)


def test_checker_flags_unauthorized_reads():
    report = sim.check_goals([fabricated_epoch(), fabricated_decrypt()])
    assert not report.confidentiality and not report.ok
    assert any(v.startswith("confidentiality") for v in report.violations)


def test_checker_accepts_authorized_reads():
    report = sim.check_goals(
        [fabricated_epoch(recipients=(b"Z" * 32,)), fabricated_decrypt()]
    )
    assert report.confidentiality


def test_checker_flags_tampered_accepts():
    report = sim.check_goals([fabricated_decrypt(tampered=True)])
    assert not report.integrity


def test_checker_flags_honest_rejection():
    event = sim.TxEvent(
        tick=1, actor="bob", action="request", tag="MEETING_REQUEST",
        ok=False, reason=Reason.DUPLICATE_REQUEST, block=None, honest=True,
    )
    assert not sim.check_goals([event]).availability
    adversarial = sim.TxEvent(
        tick=1, actor="mallory", action="request", tag="MEETING_REQUEST",
        ok=False, reason=Reason.DUPLICATE_REQUEST, block=None, honest=False,
    )
    assert sim.check_goals([adversarial]).availability


def test_checker_flags_ghost_readthrough():
    sneaky = fabricated_decrypt(
        actor_ivk=b"R" * 32, ghost=True, epoch=1, epoch_at_leave=0
    )
    report = sim.check_goals([fabricated_epoch(epoch=1, recipients=(b"R" * 32,)), sneaky])
    assert not report.expulsion


def test_checker_flags_successful_attack():
    event = sim.AdversaryEvent(
        tick=1, actor="mallory", attack="impersonate", failed=False, detail=""
    )
    assert not sim.check_goals([event]).attacks_frustrated


def test_checker_flags_epoch_gap():
    report = sim.check_goals([fabricated_epoch(epoch=0), fabricated_epoch(epoch=2)])
    assert not report.epochs_contiguous


def test_checker_flags_nonce_reuse():
    packet = sim.PacketEvent(
        tick=1, sender="bob", meeting=0, stream=1, epoch=0, counter=0,
        nbytes=8, key_digest=b"K" * 32, nonce=bytes(12),
    )
    assert not sim.check_goals([packet, packet]).nonces_unique
    different_key = sim.PacketEvent(
        tick=2, sender="carol", meeting=1, stream=1, epoch=0, counter=0,
        nbytes=8, key_digest=b"Q" * 32, nonce=bytes(12),
    )
    assert sim.check_goals([packet, different_key]).nonces_unique


def test_transcript_ends_with_check_lines():
    simulation = run_bundled("join_rekey")
    text = sim.render_transcript(simulation)
    lines = text.splitlines()
    assert lines[0].startswith("# seed=2003 rule=designation")
    assert lines[-1] == "[t=end] check name=all-goals ok=1"
    assert sum(1 for l in lines if l.startswith("[t=end] check")) == 8

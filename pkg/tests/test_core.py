import numpy as np
import pytest

from askdagger.core import (
    AlignmentError,
    DemoDataset,
    DemoTuple,
    FeedbackRecord,
    Kind,
    Observation,
    Reward,
    dumps_jsonl,
    load_jsonl,
    save_jsonl,
    seed_record,
)


def obs(n=4, d=3, fill=0.5):
    return Observation(np.full((n, d), fill))


def tup(kind=Kind.VALIDATION, action=0, goal=1):
    reward = {
        Kind.VALIDATION: Reward.VALIDATED,
        Kind.ANNOTATION: Reward.REJECTED,
        Kind.RELABELED: Reward.NONE,
        Kind.SEED: Reward.NONE,
    }[kind]
    return DemoTuple(obs(), action, goal, reward, kind)


def rec(u=0.5, r=Reward.VALIDATED, k=0, queried=True, episode=0, step=0):
    return FeedbackRecord(u=u, r=r, k=k, queried=queried, episode=episode, step=step)


class TestInvariants:
    def test_kind_reward_consistency_enforced(self):
        with pytest.raises(ValueError):
            DemoTuple(obs(), 0, 1, Reward.NONE, Kind.VALIDATION)
        with pytest.raises(ValueError):
            DemoTuple(obs(), 0, 1, Reward.VALIDATED, Kind.ANNOTATION)
        with pytest.raises(ValueError):
            DemoTuple(obs(), 0, 1, Reward.REJECTED, Kind.RELABELED)

    def test_action_must_index_a_candidate(self):
        with pytest.raises(ValueError):
            DemoTuple(obs(n=3), 3, 1, Reward.VALIDATED, Kind.VALIDATION)
        with pytest.raises(ValueError):
            DemoTuple(obs(n=3), -1, 1, Reward.VALIDATED, Kind.VALIDATION)

    def test_uncertainty_bounds(self):
        with pytest.raises(ValueError):
            rec(u=1.5)
        with pytest.raises(ValueError):
            rec(u=-0.1)

    def test_unqueried_records_carry_zero_reward(self):
        with pytest.raises(ValueError):
            FeedbackRecord(u=0.5, r=Reward.VALIDATED, k=0, queried=False, episode=0, step=0)

    def test_seed_record_shape(self):
        sr = seed_record()
        assert sr.u == 0.0 and sr.r == Reward.NONE and sr.k == 0 and not sr.queried


class TestAppendTrajectory:
    def test_empty_dataset_plus_three(self):
        ds = DemoDataset()
        ds.append_trajectory([tup() for _ in range(3)], [rec() for _ in range(3)])
        assert len(ds) == 3

    def test_empty_trajectory_is_noop(self):
        ds = DemoDataset()
        ds.append_trajectory([tup() for _ in range(5)], [rec() for _ in range(5)])
        ds.append_trajectory([], [])
        assert len(ds) == 5

    def test_two_appends_preserve_insertion_order(self):
        ds = DemoDataset()
        first = [tup(action=i) for i in range(2)]
        second = [tup(action=i) for i in range(3)]
        ds.append_trajectory(first, [rec(step=i) for i in range(2)])
        ds.append_trajectory(second, [rec(step=2 + i) for i in range(3)])
        # enumerated oracle: indices 0..4 map to the tuples in append order
        expected = first + second
        assert len(ds) == 5
        for i in range(5):
            assert ds.tuples[i] is expected[i]
            assert ds.records[i].step == i

    def test_length_mismatch_is_alignment_error(self):
        ds = DemoDataset()
        with pytest.raises(AlignmentError):
            ds.append_trajectory([tup()], [])

    def test_update_counts_must_not_decrease(self):
        ds = DemoDataset()
        ds.append_trajectory([tup()], [rec(k=5)])
        with pytest.raises(AlignmentError):
            ds.append_trajectory([tup()], [rec(k=4)])


class TestCompositionCounts:
    def test_empty_dataset_all_zero(self):
        assert all(v == 0 for v in DemoDataset().composition_counts().values())

    def test_direct_count(self):
        ds = DemoDataset()
        kinds = [Kind.VALIDATION, Kind.VALIDATION, Kind.ANNOTATION]
        ds.append_trajectory([tup(kind=k) for k in kinds], [rec() for _ in kinds])
        counts = ds.composition_counts()
        assert counts[Kind.VALIDATION] == 2
        assert counts[Kind.ANNOTATION] == 1
        assert counts[Kind.RELABELED] == 0
        assert counts[Kind.SEED] == 0

    def test_random_kinds_sum_to_total(self):
        rng = np.random.default_rng(7)
        ds = DemoDataset()
        kinds = list(Kind)
        tally = {k: 0 for k in Kind}
        for _ in range(100):
            k = kinds[rng.integers(len(kinds))]
            tally[k] += 1
            qr = k is not Kind.SEED
            ds.append_trajectory(
                [tup(kind=k)],
                [rec(r=tup(kind=k).reward if qr else Reward.NONE, queried=qr)],
            )
        counts = ds.composition_counts()
        assert sum(counts.values()) == 100
        assert counts == tally


class TestJsonlRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = DemoDataset()
        for i, kind in enumerate([Kind.SEED, Kind.VALIDATION, Kind.ANNOTATION, Kind.RELABELED]):
            observation = Observation(rng.normal(size=(4, 3)))
            reward = {Kind.VALIDATION: Reward.VALIDATED, Kind.ANNOTATION: Reward.REJECTED}.get(
                kind, Reward.NONE
            )
            t = DemoTuple(observation, i % 4, i, reward, kind)
            if kind is Kind.SEED:
                r = seed_record()
            else:
                r = rec(u=rng.random(), r=reward, k=i, queried=True, episode=i, step=0)
            ds.append_trajectory([t], [r])
        path = tmp_path / "demos.jsonl"
        save_jsonl(ds, path)
        loaded = load_jsonl(path)
        save_jsonl(loaded, tmp_path / "again.jsonl")
        assert (tmp_path / "demos.jsonl").read_bytes() == (tmp_path / "again.jsonl").read_bytes()
        assert dumps_jsonl(ds) == dumps_jsonl(loaded)
        for a, b in zip(ds.tuples, loaded.tuples):
            assert np.array_equal(a.observation.features, b.observation.features)
            assert (a.action, a.goal, a.reward, a.kind) == (b.action, b.goal, b.reward, b.kind)

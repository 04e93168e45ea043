from collections import Counter

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mtgcn.augment import augment_dataset, mirror_permutation, mirror_reflect, mirror_transform, swap_symmetric
from mtgcn.skeleton import MotionSequence, SkeletonSpec, bone_lengths
from mtgcn.synth import synth_dataset


def test_reflect_examples():
    np.testing.assert_array_equal(mirror_reflect(np.array([[1.0, 2.0, 3.0]])), [[-1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(mirror_reflect(np.array([[0.0, 2.0, 3.0]])), [[0.0, 2.0, 3.0]])


def test_reflect_matches_right_multiplication(rng):
    f = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(mirror_reflect(f), f @ np.diag([-1.0, 1.0, 1.0]))


def test_swap_single_pair_and_empty(rng):
    f = rng.normal(size=(4, 3))
    perm = mirror_permutation([(2, 3)], J=4)
    g = swap_symmetric(f, perm)
    np.testing.assert_array_equal(g[[0, 1]], f[[0, 1]])
    np.testing.assert_array_equal(g[2], f[3])
    np.testing.assert_array_equal(g[3], f[2])
    np.testing.assert_array_equal(swap_symmetric(f, mirror_permutation([], J=4)), f)


def test_permutation_is_product_of_transpositions(toy):
    perm = mirror_permutation(toy)
    P = np.eye(toy.J)
    for l, r in toy.symmetric_pairs:
        E = np.eye(toy.J)
        E[[l, r]] = E[[r, l]]
        P = E @ P
    np.testing.assert_array_equal(np.eye(toy.J)[perm], P)
    assert np.array_equal(perm[perm], np.arange(toy.J))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_involutions_bitwise(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(6, 3)) * 100
    assert mirror_reflect(mirror_reflect(f)).tobytes() == f.tobytes()
    perm = mirror_permutation([(1, 4), (2, 5)], J=6)
    assert swap_symmetric(swap_symmetric(f, perm), perm).tobytes() == f.tobytes()


def test_mirror_transform_involution_and_hip(toy):
    seq = synth_dataset(toy, 1, 9, seed=5)[0]
    m = mirror_transform(seq)
    assert mirror_transform(m).data.tobytes() == seq.data.tobytes()
    np.testing.assert_array_equal(m.data[toy.hip_index, 0], -seq.data[toy.hip_index, 0])
    np.testing.assert_array_equal(m.data[toy.hip_index, 1:], seq.data[toy.hip_index, 1:])


def test_bone_lengths_preserved_on_symmetric_skeleton(toy):
    seq = synth_dataset(toy, 1, 9, seed=6)[0]
    m = mirror_transform(seq)
    np.testing.assert_allclose(bone_lengths(m.frames(), toy), bone_lengths(seq.frames(), toy), atol=1e-9)


def test_bone_length_multiset_preserved_on_asymmetric_data(toy, rng):
    frames = rng.normal(size=(4, toy.J, 3))  # arbitrary, non-symmetric lengths
    seq = MotionSequence.from_frames(frames, spec=toy)
    m = mirror_transform(seq)
    for t in range(4):
        a = Counter(np.round(bone_lengths(frames[t], toy), 9))
        b = Counter(np.round(bone_lengths(m.frames()[t], toy), 9))
        assert a == b


def test_right_arm_raise_becomes_left_arm_raise():
    # 0 hip, 1 l_shoulder, 2 r_shoulder, 3 l_hand, 4 r_hand
    spec = SkeletonSpec(J=5, bones=((0, 1), (0, 2), (1, 3), (2, 4)), symmetric_pairs=((1, 2), (3, 4)))
    T = 6
    frames = np.zeros((T, 5, 3))
    frames[:, 1] = [-1, 0, 1]
    frames[:, 2] = [1, 0, 1]
    frames[:, 3] = [-1, 0, 0]
    z = np.linspace(0, 2, T)
    frames[:, 4] = np.stack([np.ones(T), np.zeros(T), z], axis=1)  # right hand rises
    f = MotionSequence.from_frames(frames, spec=spec)
    g = mirror_transform(f)
    np.testing.assert_array_equal(g.frames()[:, 3], mirror_reflect(frames[:, 4]))
    np.testing.assert_array_equal(g.frames()[:, 4, 2], np.zeros(T))  # right hand now static
    np.testing.assert_array_equal(g.frames()[:, 3, 2], z)


def test_augment_doubles(toy):
    seqs = synth_dataset(toy, 10, 5, seed=0)
    assert len(augment_dataset(seqs, toy)) == 20

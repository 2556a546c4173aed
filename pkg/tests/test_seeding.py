import numpy as np

from crossworld.seeding import Stream, as_seed_sequence, derive, to_int


def test_derive_depends_only_on_the_path() -> None:
    first = derive(7, 2, 3, Stream.TRAIN).generate_state(4)
    np.testing.assert_array_equal(first, derive(7, 2, 3, Stream.TRAIN).generate_state(4))
    assert not np.array_equal(first, derive(7, 2, 3, Stream.TEST).generate_state(4))
    assert not np.array_equal(first, derive(8, 2, 3, Stream.TRAIN).generate_state(4))


def test_seed_sequences_are_copied() -> None:
    original = derive(1, 0)
    copy = as_seed_sequence(original)
    assert copy is not original
    copy.spawn(3)
    assert original.n_children_spawned == 0

    a = np.random.default_rng(as_seed_sequence(original).spawn(1)[0]).random(3)
    b = np.random.default_rng(as_seed_sequence(original).spawn(1)[0]).random(3)
    np.testing.assert_array_equal(a, b)


def test_to_int_is_stable() -> None:
    assert to_int(5) == to_int(5)
    assert to_int(derive(5, 1)) == to_int(derive(5, 1))
    assert 0 <= to_int(None) < 2**64

import dataclasses
import threading

import numpy as np
import pytest
from scipy import stats

from pymodaq_plugins_blob.attacksim import PirateBlob
from pymodaq_plugins_blob.blobcore import (Blob, ControlMessage, ErasedEntryError, OperatorState,
                                           SchemeParams, decrypt, derive_key, encrypt, expand_seed,
                                           gather_key_bits, initialise, next_control_message)
from pymodaq_plugins_blob.combinatorics import visit_mean, visit_stats
from pymodaq_plugins_blob.primitives import codec
from pymodaq_plugins_blob.primitives.operator_thread_safe import OperatorStateThreadSafe
from pymodaq_plugins_blob.tardos import generate_code
from pymodaq_plugins_blob.utils import (AuthenticityError, DeploymentMismatchError, DomainError,
                                        ExhaustionError, FormatError, ParamsError, ResourceError)

from conftest import seed


def _params(**kwargs):
    values = dict(N=4096, w=1, ell=128, t=256, k0=96, gamma=0.1, U=8, c0=2, p_fp=2. ** -27)
    values.update(kwargs)
    return SchemeParams.create(**values)


@pytest.mark.parametrize('kwargs, constraint', [
    (dict(t=4096), 't < N'),
    (dict(t=4000), 'ell <= N - t'),
    (dict(k0=200), 'k0 <= k'),
    (dict(gamma=1.), 'gamma'),
    (dict(mode='both'), 'mode'),
])
def test_params_name_the_violated_constraint(kwargs, constraint):
    with pytest.raises(ParamsError, match=constraint):
        _params(**kwargs)


def test_params_consistency_and_json(small_params):
    assert small_params.M == 4096 and small_params.k == 128
    with pytest.raises(ParamsError, match='M = N'):
        SchemeParams(**{**small_params.to_dict(), 'M': 4095}).validate()
    with pytest.raises(ParamsError, match='k = ell'):
        SchemeParams(**{**small_params.to_dict(), 'k': 64}).validate()
    loaded = SchemeParams.from_json(small_params.to_json())
    assert loaded == small_params
    assert loaded.digest() == small_params.digest()
    assert small_params.unavailable_needed == 96
    assert small_params.l_suff == 411
    with pytest.raises(ParamsError):
        SchemeParams.from_dict({'N': 3})


def test_key_size_must_match_cipher():
    params = _params(ell=64, k0=32)
    with pytest.raises(ParamsError, match='key size'):
        initialise(params, seed('k64'))
    chacha = _params(ell=256, cipher='chacha20-poly1305')
    state, blobs = initialise(chacha, seed('k256'))
    ct = encrypt(state, b'payload', seed('r'))
    assert ct.cipher == 'chacha20-poly1305'
    assert decrypt(blobs[0], ct) == b'payload'
    assert decrypt(blobs[0], ct, 'chacha20-poly1305') == b'payload'
    with pytest.raises(AuthenticityError):
        decrypt(blobs[0], ct, 'aes-gcm')


def test_no_tracing_single_user_blob_equals_master():
    state, blobs = initialise(_params(t=0, U=1), seed('t0'))
    np.testing.assert_array_equal(blobs[0].entries, state.master)


def test_blobs_differ_exactly_where_codewords_differ(deployment):
    state, blobs = deployment
    code = state.code
    differ = np.flatnonzero(np.any(blobs[0].entries != blobs[1].entries, axis=1))
    expected = code.positions[code.codewords[0] != code.codewords[1]]
    np.testing.assert_array_equal(differ, expected)
    functional = state.functional_indices
    for blob in blobs:
        np.testing.assert_array_equal(blob.entries[functional], state.master[functional])
        assert blob.owner == blobs.index(blob)


def test_initialise_is_deterministic(small_params):
    state_a, blobs_a = initialise(small_params, seed('same'))
    state_b, blobs_b = initialise(small_params, seed('same'))
    assert state_a.code.digest() == state_b.code.digest()
    assert [b.digest() for b in blobs_a] == [b.digest() for b in blobs_b]
    _, blobs_c = initialise(small_params, seed('different'))
    assert blobs_a[0].digest() != blobs_c[0].digest()


def test_desk_scale_blob_file_round_trip(tmp_path):
    params = SchemeParams.create(N=2 ** 16, w=1, ell=128, t=2 ** 12, k0=96, gamma=0.1, U=2, c0=4,
                                 p_fp=2. ** -29)
    state, blobs = initialise(params, seed('desk'))
    blobs[1].save(tmp_path / 'user.blob')
    assert (tmp_path / 'user.blob').stat().st_size == codec.BLOB_HEADER.size + 2 ** 16 // 8
    loaded = Blob.load(tmp_path / 'user.blob')
    np.testing.assert_array_equal(loaded.entries, blobs[1].entries)
    assert loaded.owner == 1 and loaded.digest() == blobs[1].digest()


def test_deployment_size_cap():
    params = SchemeParams.create(N=2 ** 24, w=1, ell=128, t=73000, k0=96, gamma=0.1, U=2 ** 20, c0=8,
                                 p_fp=2. ** -10)
    with pytest.raises(ResourceError):
        initialise(params, seed('paytv'))


def test_single_use_bookkeeping(deployment, small_params):
    state, _ = deployment
    seen = []
    for n in range(10):
        msg = next_control_message(state, seed('msg', n))
        assert msg.sequence_number == n
        assert len(np.unique(msg.indices)) == small_params.ell
        seen.append(msg.indices)
    used = np.concatenate(seen)
    assert len(state.used) == 10 * small_params.ell
    np.testing.assert_array_equal(np.sort(used), state.used)
    assert not np.isin(state.used, state.code.positions).any()
    assert state.remaining == small_params.N - small_params.t - 10 * small_params.ell


def test_single_use_exhaustion_boundary():
    state, _ = initialise(_params(N=256, t=128, U=2), seed('tiny'))
    msg = next_control_message(state, seed('first'))
    assert set(msg.indices) == set(state.functional_indices)
    with pytest.raises(ExhaustionError, match='exhausted'):
        next_control_message(state, seed('second'))


def test_multi_use_draws(multi_deployment, multi_params):
    state, _ = multi_deployment
    duplicates = 0
    for n in range(50):
        msg = next_control_message(state, seed('multi', n))
        assert len(msg.indices) == multi_params.ell
        assert not np.isin(msg.indices, state.code.positions).any()
        duplicates += multi_params.ell - len(np.unique(msg.indices))
    assert len(state.used) == 0 and state.counter == 50
    # 128 draws among 3840 entries collide about twice per message
    assert duplicates > 0


@pytest.mark.parametrize('mode, N, rounds', [('single', 2 ** 16, 5), ('multi', 4096, 100)])
def test_seeded_messages_expand_to_the_operator_indices(mode, N, rounds):
    state, _ = initialise(_params(N=N, t=16, U=2, mode=mode), seed('seeded', mode),
                          build_blobs=False)
    for n in range(rounds):
        msg = next_control_message(state, seed('s', n), form='seeded')
        indices = expand_seed(msg.seed, msg.retry, msg.ell, state.params.N)
        np.testing.assert_array_equal(indices, msg.resolve(state.params.N))
        assert not np.isin(indices, state.code.positions).any()
        wire = ControlMessage.from_bytes(msg.to_bytes(), msg.ell)
        np.testing.assert_array_equal(wire.resolve(state.params.N), indices)
    if mode == 'single':
        assert len(state.used) == rounds * state.params.ell


def test_expand_seed_rejects_out_of_range():
    indices = expand_seed(seed('x')[:16], 3, 5000, 1000)
    assert len(indices) == 5000
    assert indices.min() >= 0 and indices.max() < 1000
    np.testing.assert_array_equal(indices, expand_seed(seed('x')[:16], 3, 5000, 1000))
    assert not np.array_equal(indices, expand_seed(seed('x')[:16], 4, 5000, 1000))


def test_control_message_sizes(deployment):
    state, _ = deployment
    msg = next_control_message(state, seed('size'))
    assert msg.compact_bits(state.params.N) == 72 + 128 * 12
    assert len(msg.pack_compact(state.params.N)) == 9 + 128 * 12 // 8
    assert len(msg.to_bytes()) == 9 + 128 * 8
    np.testing.assert_array_equal(ControlMessage.from_bytes(msg.to_bytes(), 128).indices, msg.indices)
    with pytest.raises(FormatError):
        ControlMessage.from_bytes(msg.to_bytes(), 64)


def test_derive_key_single_entry():
    params = SchemeParams.create(N=64, w=128, ell=1, t=4, k0=96, gamma=0.1, U=2, c0=1, p_fp=0.01)
    state, blobs = initialise(params, seed('wide'))
    msg = next_control_message(state, seed('one'))
    assert derive_key(blobs[0], msg) == blobs[0].entries[msg.indices[0]].tobytes()


def test_derive_key_matches_bit_gather_oracle(deployment):
    state, blobs = deployment
    msg = next_control_message(state, seed('gather'))
    key_bits = [int(blobs[2].entries[i, 0]) for i in msg.indices]
    expected = sum(bit << j for j, bit in enumerate(key_bits)).to_bytes(16, 'little')
    assert derive_key(blobs[2], msg) == expected
    assert derive_key(blobs[5], msg) == expected


def test_gather_keeps_duplicates_in_order():
    entries = np.array([[0b01], [0b10], [0b11]], dtype=np.uint8)
    assert gather_key_bits(entries, np.array([2, 0, 0, 1]), 2) == bytes([0b10010111])


def test_derive_key_out_of_range(deployment):
    _, blobs = deployment
    msg = ControlMessage('explicit', 0, 2, indices=np.array([0, 5000]))
    with pytest.raises(DomainError):
        derive_key(blobs[0], msg)


@pytest.mark.parametrize('mode', ['single', 'multi'])
def test_thousand_encrypt_decrypt_round_trips(mode):
    # 2^17 entries hold 1000 single-use keys of 128 entries next to the tracing positions
    state, blobs = initialise(_params(N=2 ** 17, U=3, mode=mode), seed('round-trips', mode))
    for i in range(1000):
        pt = seed('pt', i) * (i % 4 + 1)
        ct = encrypt(state, pt, seed('round', i))
        assert decrypt(blobs[i % len(blobs)], ct) == pt
    assert state.counter == 1000
    if mode == 'single':
        assert len(state.used) == 1000 * 128


def test_decryption_fails_on_changed_or_erased_entry(deployment):
    state, blobs = deployment
    ct = encrypt(state, b'next content key', seed('enc'))
    addressed = ct.control.indices[17]

    changed = blobs[0].entries.copy()
    changed[addressed] ^= 1
    with pytest.raises(AuthenticityError):
        decrypt(Blob(changed, 1, 0), ct)

    erased = np.zeros(state.params.N, dtype=bool)
    erased[addressed] = True
    pirate = PirateBlob(values=blobs[0].entries.copy(), w=1, erased=erased,
                        detected=np.zeros_like(erased), used=np.zeros_like(erased))
    with pytest.raises(ErasedEntryError):
        decrypt(pirate, ct)

    payload = bytearray(ct.payload)
    payload[20] ^= 0x40
    with pytest.raises(AuthenticityError):
        decrypt(blobs[0], dataclasses.replace(ct, payload=bytes(payload)))


def test_encryption_is_deterministic(small_params):
    outputs = []
    for _ in range(2):
        state, _ = initialise(small_params, seed('det'))
        outputs.append([encrypt(state, b'x' * 16, seed('r', i)).payload for i in range(5)])
    assert outputs[0] == outputs[1]


def test_state_file_resumes(tmp_path, deployment):
    state, _ = deployment
    for n in range(3):
        next_control_message(state, seed('before', n))
    state.save(tmp_path / 'operator.state')
    state.code.save(tmp_path / 'code.bltc')
    loaded = OperatorState.load(tmp_path / 'operator.state', tmp_path / 'code.bltc')
    np.testing.assert_array_equal(loaded.used, state.used)
    np.testing.assert_array_equal(loaded.master, state.master)
    assert loaded.counter == 3 and loaded.root_seed == state.root_seed
    a = next_control_message(state, seed('after'))
    b = next_control_message(loaded, seed('after'))
    np.testing.assert_array_equal(a.indices, b.indices)
    assert a.sequence_number == b.sequence_number == 3

    other = generate_code(state.params, seed('foreign'))
    with pytest.raises(DeploymentMismatchError):
        OperatorState.load(tmp_path / 'operator.state', other)


def test_pirate_file_is_not_a_user_blob(tmp_path, deployment):
    _, blobs = deployment
    erased = np.zeros(blobs[0].N, dtype=bool)
    PirateBlob(blobs[0].entries.copy(), 1, erased, erased, erased).save(tmp_path / 'p.blbp')
    with pytest.raises(FormatError):
        Blob.load(tmp_path / 'p.blbp')


def test_thread_safe_operator_serialises_draws():
    params = SchemeParams.create(N=2 ** 16, w=1, ell=128, t=1024, k0=96, gamma=0.1, U=2, c0=2,
                                 p_fp=2. ** -29)
    state, _ = initialise(params, seed('threads'), build_blobs=False)
    safe = OperatorStateThreadSafe(params, state.code, state.master.copy(), state.root_seed)
    messages = []

    def worker(i):
        for n in range(50):
            messages.append(safe.next_control_message(seed('thread', i, n)))

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    drawn = np.concatenate([msg.indices for msg in messages])
    assert len(np.unique(drawn)) == len(drawn) == 400 * 128
    assert safe.counter == 400
    assert sorted(msg.sequence_number for msg in messages) == list(range(400))


@pytest.mark.slow
def test_multi_use_visited_mean():
    params = SchemeParams.create(N=1128, w=1, ell=128, t=128, k0=96, gamma=0.1, U=1, c0=1, p_fp=0.5,
                                 mode='multi')
    state, _ = initialise(params, seed('visits'), build_blobs=False)
    runs = 10 ** 4
    visited = [len(np.unique(np.concatenate([state.next_control_message(seed('visit', run, m)).indices
                                             for m in range(4)])))
               for run in range(runs)]
    assert abs(np.mean(visited) / visit_mean(1000, 512) - 1) < 0.01


@pytest.mark.slow
def test_multi_use_visited_distribution():
    params = SchemeParams.create(N=60, w=16, ell=8, t=10, k0=96, gamma=0.1, U=1, c0=1, p_fp=0.5,
                                 mode='multi')
    state, _ = initialise(params, seed('chi2'), build_blobs=False)
    trials = 10 ** 5
    counts = np.zeros(41, dtype=np.int64)
    for trial in range(trials):
        drawn = np.concatenate([state.next_control_message(seed('chi2', trial, m)).indices
                                for m in range(5)])
        counts[len(np.unique(drawn))] += 1
    expected = trials * np.asarray(visit_stats(50, 40).pmf)
    # pool the sparse tails so every cell expects at least 5 counts
    keep = expected >= 5
    observed = np.append(counts[:len(expected)][keep], counts[:len(expected)][~keep].sum())
    expected = np.append(expected[keep], expected[~keep].sum())
    observed, expected = observed[expected > 0], expected[expected > 0]
    expected *= observed.sum() / expected.sum()
    assert stats.chisquare(observed, expected).pvalue > 0.01

import json

import numpy as np
import pytest

from pymodaq_plugins_blob.cli import (MANIFEST, PIRATE, STATE, TRANSCRIPT, main, resolve_params,
                                      paytv_report, user_file)

SEED = '000102030405060708090a0b0c0d0e0f'
SMALL = dict(N=4096, t=256, U=4, c0=2, p_fp=2. ** -28)


def _params_file(tmp_path, **overrides):
    path = tmp_path / 'params.json'
    path.write_text(json.dumps({**SMALL, **overrides}))
    return str(path)


def _init(tmp_path, name='deploy', seed=SEED, **overrides):
    out = tmp_path / name
    assert main(['init', '--params-file', _params_file(tmp_path, **overrides), '--seed', seed,
                 '--out-dir', str(out)]) == 0
    return out


def _output(capsys):
    return json.loads(capsys.readouterr().out)


def test_resolve_params_fills_derived_sizes(tmp_path):
    params = resolve_params('desk', _params_file(tmp_path))
    assert (params.N, params.M, params.ell, params.k, params.t) == (4096, 4096, 128, 128, 256)
    assert params.cipher == 'aes-gcm' and params.mode == 'single'
    assert resolve_params('desk', _params_file(tmp_path), 'multi').mode == 'multi'
    desk = resolve_params('desk')
    assert desk.N == 65536 and desk.t == 4096
    # t is sized for single use when the profile leaves it out
    paytv = resolve_params('paytv')
    assert paytv.N == 2 ** 24 and 6e4 < paytv.t < 8e4
    assert resolve_params('paper') == paytv


def test_init_is_deterministic(tmp_path, capsys):
    first = _init(tmp_path, 'a')
    summary = _output(capsys)
    second = _init(tmp_path, 'b')
    assert _output(capsys) == summary
    assert summary['l_suff'] == 411
    manifest_a = json.loads((first / MANIFEST).read_text())
    manifest_b = json.loads((second / MANIFEST).read_text())
    assert manifest_a['deployment_hash'] == manifest_b['deployment_hash']
    assert manifest_a['files'] == manifest_b['files']
    assert len(manifest_a['files']) == 4 + 4
    assert (first / user_file(3)).exists()

    _init(tmp_path, 'c', seed='ff' * 16)
    assert json.loads((tmp_path / 'c' / MANIFEST).read_text())['deployment_hash'] != \
        manifest_a['deployment_hash']


@pytest.mark.parametrize('argv_tail, overrides', [
    ([], dict(t=5000)),
    ([], dict(colluders=3)),
    (['--seed', 'abcd'], {}),
    (['--seed', 'not hex'], {}),
    ([], dict(t='many')),
    ([], dict(gamma=[0.1])),
    ([], dict(w=0)),
])
def test_init_rejects_bad_input(tmp_path, argv_tail, overrides):
    argv = ['init', '--params-file', _params_file(tmp_path, **overrides), '--out-dir',
            str(tmp_path / 'out')] + argv_tail
    assert main(argv) == 2


@pytest.mark.parametrize('profile', ['paper', 'paytv'])
def test_paytv_profile_is_too_large_to_deploy(tmp_path, profile):
    assert main(['init', '--profile', profile, '--out-dir', str(tmp_path / profile)]) == 2
    assert not (tmp_path / profile / MANIFEST).exists()


def test_run_resumes_where_it_stopped(tmp_path, capsys):
    split = _init(tmp_path, 'split')
    whole = _init(tmp_path, 'whole')
    capsys.readouterr()
    assert main(['run', '--out-dir', str(split), '--rounds', '2']) == 0
    assert _output(capsys)['counter'] == 2
    assert main(['run', '--out-dir', str(split), '--rounds', '3']) == 0
    assert _output(capsys) == dict(counter=5, used=5 * 128, remaining=4096 - 256 - 5 * 128)
    assert main(['run', '--out-dir', str(whole), '--rounds', '5']) == 0
    assert (split / TRANSCRIPT).read_text() == (whole / TRANSCRIPT).read_text()
    assert (split / STATE).read_bytes() == (whole / STATE).read_bytes()
    lines = [json.loads(line) for line in (whole / TRANSCRIPT).read_text().splitlines()]
    assert [line['round'] for line in lines] == list(range(5))
    assert all(line['control_bits'] == 72 + 128 * 12 for line in lines)


def test_run_stops_when_key_material_is_exhausted(tmp_path):
    out = _init(tmp_path)
    # (4096 - 256) / 128 = 30 keys
    assert main(['run', '--out-dir', str(out), '--rounds', '31']) == 2
    assert len((out / TRANSCRIPT).read_text().splitlines()) == 30
    assert main(['run', '--out-dir', str(out), '--rounds', '1']) == 2


def test_seeded_rounds_in_multi_use(tmp_path):
    out = _init(tmp_path, mode='multi', t=32)
    assert main(['run', '--out-dir', str(out), '--rounds', '40', '--form', 'seeded']) == 0
    lines = [json.loads(line) for line in (out / TRANSCRIPT).read_text().splitlines()]
    assert len(lines) == 40
    assert all(line['form'] == 'seeded' and line['control_bits'] == 72 + 160 for line in lines)


def test_tampered_blob_is_refused(tmp_path):
    out = _init(tmp_path)
    path = out / user_file(2)
    data = bytearray(path.read_bytes())
    data[-1] ^= 1
    path.write_bytes(bytes(data))
    assert main(['run', '--out-dir', str(out)]) == 2


def test_attack_then_trace(tmp_path, capsys):
    out = _init(tmp_path)
    assert main(['run', '--out-dir', str(out), '--rounds', '3']) == 0
    capsys.readouterr()

    assert main(['attack', '--out-dir', str(out), '--coalition', '1', '--epsilon', '0',
                 '--trials', '200']) == 0
    attack = _output(capsys)
    assert attack['erased'] == 0 and attack['visible_used'] == 3 * 128
    assert attack['next_key_failure_rate'] == 0.
    assert (out / PIRATE).exists() and (out / 'attack.json').exists()
    assert main(['trace', '--out-dir', str(out)]) == 0
    assert _output(capsys)['accused'] == [1]

    assert main(['attack', '--out-dir', str(out), '--coalition', '1', '--epsilon', '1',
                 '--trials', '200']) == 0
    attack = _output(capsys)
    assert attack['next_key_failure_rate'] == 1. and attack['erasure_fraction'] == 1.
    assert main(['trace', '--out-dir', str(out), '--threshold', 'analytic']) == 0
    trace = _output(capsys)
    assert trace['accused'] == [] and trace['erasure_fraction'] == 1.
    assert json.loads((out / 'trace.json').read_text())['scored_positions'] == 0


def test_attack_and_trace_errors(tmp_path):
    out = _init(tmp_path)
    assert main(['attack', '--out-dir', str(out), '--coalition', '7']) == 2
    assert main(['attack', '--out-dir', str(out), '--coalition', '0', '--epsilon', '2']) == 2
    assert main(['attack', '--out-dir', str(out), '--coalition', '0', '--trials', '0']) == 2
    assert main(['attack', '--out-dir', str(out), '--coalition', '0', '--epsilon', 'half']) == 2
    assert main(['attack', '--out-dir', str(out), '--coalition', 'a,b']) == 2
    assert main(['attack', '--out-dir', str(out), '--coalition', ',']) == 2
    assert not (out / PIRATE).exists()
    assert main(['trace', '--out-dir', str(out), '--pirate', str(tmp_path / 'missing.blbp')]) == 3
    assert main(['trace', '--out-dir', str(tmp_path / 'nowhere')]) == 3


@pytest.mark.parametrize('command', ['table1', 'paytv-check'])
def test_table1(tmp_path, capsys, command):
    assert main([command, '--out-dir', str(tmp_path)]) == 0
    report = _output(capsys)
    assert report == json.loads((tmp_path / 'table1.json').read_text())
    assert report['l_suff_c8'] == 6568 and report['l_suff_check']
    assert report['nmax_check'] and report['nmax_single'] < report['nmax_upper']
    assert report == paytv_report()


def test_sweep(tmp_path, capsys):
    out = tmp_path / 'sweep'
    argv = ['sweep', '--params-file', _params_file(tmp_path), '--colluders', '2', '--rounds', '1',
            '--grid', '0,1', '--trials', '2', '--threshold', 'analytic', '--out-dir', str(out),
            '--seed', SEED]
    assert main(argv) == 0
    records = [json.loads(line) for line in (out / 'sweep.jsonl').read_text().splitlines()]
    assert [r['epsilon'] for r in records] == [0., 1.]
    assert records[1]['fail_rate'] == 1.
    assert capsys.readouterr().out == (out / 'sweep.jsonl').read_text()
    assert main(argv[:3] + ['--colluders', '0']) == 2
    assert main(argv[:3] + ['--grid', '0.1,lots', '--out-dir', str(out)]) == 2


@pytest.mark.slow
def test_figures(tmp_path, capsys):
    assert main(['figures', '--out-dir', str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ['fig2.csv', 'fig3.csv', 'fig4.csv', 'fig5.csv', 'fig6.csv', 'nmax_multi_ell.csv']
    crossover = np.loadtxt(tmp_path / 'fig6.csv', delimiter=',', skiprows=1)
    assert crossover[:, 0].tolist() == list(range(2, 31))
    gap = np.sign(crossover[:, 2] - crossover[:, 1])
    assert gap[0] > 0 and gap[-1] < 0
    assert np.count_nonzero(np.diff(gap)) >= 1


@pytest.mark.slow
def test_ten_thousand_multi_use_rounds(tmp_path, capsys):
    out = _init(tmp_path, U=2, mode='multi')
    capsys.readouterr()
    assert main(['run', '--out-dir', str(out), '--rounds', '10000']) == 0
    assert _output(capsys)['counter'] == 10000
    assert len((out / TRANSCRIPT).read_text().splitlines()) == 10000

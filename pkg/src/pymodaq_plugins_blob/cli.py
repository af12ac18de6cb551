# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Command line front end: deployment lifecycle, protocol rounds, collusion attacks, tracing and
the figure and table reproduction.

    python -m pymodaq_plugins_blob.cli init --profile desk --seed 00112233... --out-dir deploy
    python -m pymodaq_plugins_blob.cli run --out-dir deploy --rounds 10
    python -m pymodaq_plugins_blob.cli attack --out-dir deploy --coalition 1,5,9 --epsilon auto
    python -m pymodaq_plugins_blob.cli trace --out-dir deploy

Exit codes: 0 success, 2 invalid parameters or exhausted key material, 3 I/O or file format
errors, 4 protocol invariant violations.
"""
import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import List, Optional

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import __version__, config
from pymodaq_plugins_blob import analysis
from pymodaq_plugins_blob.attacksim import (PirateBlob, attacker_epsilon, evaluate_next_key_failure,
                                            observed_indices, run_collusion, summarise_sweep,
                                            sweep_attack, to_json_lines, STRATEGIES)
from pymodaq_plugins_blob.blobcore import (Blob, ControlMessage, FORMS, SchemeParams, decrypt,
                                           initialise)
from pymodaq_plugins_blob.primitives.operator_thread_safe import OperatorStateThreadSafe
from pymodaq_plugins_blob.tardos import TracingCode, accuse, make_threshold, sufficient_length
from pymodaq_plugins_blob.utils import (AuthenticityError, DeploymentMismatchError, DomainError,
                                        ExhaustionError, FormatError, ProtocolError, ResourceError,
                                        SEED_BYTES, as_seed, derive_seed)

logger = set_logger(get_module_name(__file__), add_to_console=False)

MANIFEST = 'deployment.json'
PARAMS = 'params.json'
CODE = 'code.bltc'
MASTER = 'master.blob'
STATE = 'operator.state'
USERS = 'users'
TRANSCRIPT = 'transcript.jsonl'
PIRATE = 'pirate.blbp'

PARAM_TYPES = dict(M=int, w=int, N=int, k=int, ell=int, t=int, k0=int, gamma=float, U=int, c0=int,
                   p_fp=float, mode=str, cipher=str)

# alternative profile names accepted by --profile
PROFILE_ALIASES = dict(paper='paytv')


def user_file(user: int) -> str:
    return f'{USERS}/user_{user:04d}.blob'


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def deployment_hash(params: SchemeParams, code: TracingCode) -> str:
    return hashlib.sha256((params.to_json() + code.digest()).encode()).hexdigest()


def dump_json(data, path: Optional[Path] = None) -> str:
    text = json.dumps(data, sort_keys=True, indent=2)
    if path is not None:
        path.write_text(text + '\n')
    return text


def parse_seed(text: str) -> bytes:
    seed = as_seed(text)
    if len(seed) != SEED_BYTES:
        raise DomainError(f'seeds are {SEED_BYTES}-byte hex strings, got {len(seed)} bytes')
    return seed


def parse_coalition(text: str) -> List[int]:
    try:
        coalition = [int(u) for u in text.split(',') if u.strip()]
    except ValueError:
        raise DomainError(f'--coalition takes comma separated user ids, got {text!r}')
    if not coalition:
        raise DomainError('--coalition is empty')
    return coalition


def parse_epsilon(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DomainError(f'erasure fraction must be a number, got {text!r}')


def parse_epsilons(text: str) -> List[float]:
    return [parse_epsilon(x) for x in text.split(',')]


def resolve_params(profile: str, params_file: Optional[str] = None, mode: Optional[str] = None) -> SchemeParams:
    """Profile values, overridden by a (possibly partial) JSON parameter file and the mode flag

    Missing sizes are derived: M = N w or N = M / w, k = ell w or ell = k / w, and t from the
    single-use sizing rule when absent.
    """
    profile = PROFILE_ALIASES.get(profile, profile)
    try:
        values = {key: value for key, value in dict(config('profiles', profile)).items()}
    except KeyError:
        raise DomainError(f'unknown profile {profile!r}')
    if params_file is not None:
        overrides = json.loads(Path(params_file).read_text())
        for a, b in (('N', 'M'), ('M', 'N'), ('ell', 'k'), ('k', 'ell')):
            if a in overrides and b not in overrides:
                values.pop(b, None)
        values.update(overrides)
    if mode is not None:
        values['mode'] = mode
    values.setdefault('cipher', config('blob', 'cipher'))
    unknown = set(values) - set(PARAM_TYPES)
    if unknown:
        raise DomainError(f'unknown parameters {sorted(unknown)}')
    try:
        values = {key: PARAM_TYPES[key](value) for key, value in values.items()}
    except (TypeError, ValueError) as e:
        raise DomainError(f'invalid parameter value: {e}')

    w = values['w']
    if w < 1:
        raise DomainError(f'w={w} must be at least 1')
    if 'N' not in values:
        values['N'] = values['M'] // w
    values.setdefault('M', values['N'] * w)
    if 'ell' not in values:
        values['ell'] = values['k'] // w
    values.setdefault('k', values['ell'] * w)
    if 't' not in values:
        l_suff = sufficient_length(values['c0'], values['U'] / values['p_fp'])
        values['t'] = analysis.required_t_single(values['ell'], values['k'], values['k0'],
                                                 values['gamma'], l_suff)
    return SchemeParams.from_dict(values)


class Deployment:
    """Files of one deployment directory, checked against its manifest"""

    def __init__(self, out_dir: str):
        self.root = Path(out_dir)
        self.manifest = json.loads((self.root / MANIFEST).read_text())
        if not {'params', 'deployment_hash', 'files'} <= set(self.manifest):
            raise FormatError(f'{self.root / MANIFEST} is not a deployment manifest')
        self.params = SchemeParams.from_dict(self.manifest['params'])
        self.code = TracingCode.load(self.root / CODE)
        if deployment_hash(self.params, self.code) != self.manifest['deployment_hash']:
            raise DeploymentMismatchError(f'{CODE} does not belong to the deployment in {self.root}')

    def verify(self, name: str) -> Path:
        path = self.root / name
        expected = self.manifest['files'].get(name)
        if expected is None or file_digest(path) != expected:
            raise DeploymentMismatchError(f'{path} does not match the deployment manifest')
        return path

    def state(self) -> OperatorStateThreadSafe:
        return OperatorStateThreadSafe.load(self.root / STATE, self.code)

    def user_blob(self, user: int) -> Blob:
        if not 0 <= user < self.params.U:
            raise DomainError(f'user {user} outside [0, {self.params.U})')
        return Blob.load(self.verify(user_file(user)))

    def messages(self) -> List[ControlMessage]:
        """Control messages broadcast so far, as recorded in the transcript"""
        path = self.root / TRANSCRIPT
        if not path.exists():
            return []
        return [ControlMessage.from_bytes(bytes.fromhex(json.loads(line)['control']), self.params.ell)
                for line in path.read_text().splitlines() if line]


def cmd_init(args) -> int:
    params = resolve_params(args.profile, args.params_file, args.mode)
    seed = parse_seed(args.seed)
    state, blobs = initialise(params, seed)
    root = Path(args.out_dir)
    (root / USERS).mkdir(parents=True, exist_ok=True)

    (root / PARAMS).write_text(params.to_json() + '\n')
    state.code.save(root / CODE)
    state.master_blob().save(root / MASTER)
    state.save(root / STATE)
    for user, blob in enumerate(blobs):
        blob.save(root / user_file(user))
    names = [PARAMS, CODE, MASTER, STATE] + [user_file(u) for u in range(params.U)]
    manifest = dict(params=params.to_dict(), deployment_hash=deployment_hash(params, state.code),
                    files={name: file_digest(root / name) for name in names}, version=__version__)
    dump_json(manifest, root / MANIFEST)
    logger.info(f'{params.U} user blobs written to {root}')
    print(dump_json(dict(params=params.to_dict(), l_suff=params.l_suff,
                         deployment_hash=manifest['deployment_hash'],
                         digests={name: manifest['files'][name] for name in (PARAMS, CODE, MASTER, STATE)})))
    return 0


def cmd_run(args) -> int:
    deployment = Deployment(args.out_dir)
    state = deployment.state()
    params = deployment.params
    blobs = [deployment.user_blob(u) for u in range(params.U)]
    transcript = deployment.root / TRANSCRIPT
    try:
        with transcript.open('a') as f:
            for _ in range(args.rounds):
                round_seed = derive_seed(state.root_seed, 'round', state.counter)
                plaintext = derive_seed(round_seed, 'plaintext') + derive_seed(round_seed, 'plaintext', 1)
                ct = state.encrypt(plaintext, round_seed, args.form)
                for blob in blobs:
                    try:
                        recovered = decrypt(blob, ct, params.cipher)
                    except AuthenticityError as e:
                        raise ProtocolError(f'user {blob.owner} failed to decrypt round '
                                            f'{ct.control.sequence_number}: {e}')
                    if recovered != plaintext:
                        raise ProtocolError(f'user {blob.owner} recovered a wrong plaintext')
                bits = ct.control.compact_bits(params.N)
                logger.info(f'round {ct.control.sequence_number}: control message of {bits} bits')
                f.write(json.dumps(dict(round=ct.control.sequence_number, form=ct.control.form,
                                        control=ct.control.to_bytes().hex(), control_bits=bits,
                                        payload_bytes=len(ct.payload)), sort_keys=True) + '\n')
    finally:
        state.save(deployment.root / STATE)
    print(dump_json(dict(counter=state.counter, used=int(len(state.used)), remaining=state.remaining)))
    return 0


def cmd_attack(args) -> int:
    deployment = Deployment(args.out_dir)
    params = deployment.params
    coalition = parse_coalition(args.coalition)
    blobs = [deployment.user_blob(u) for u in coalition]
    seed = parse_seed(args.seed)
    visible = observed_indices(deployment.messages(), params.N)
    epsilon = attacker_epsilon(params) if args.epsilon == 'auto' else parse_epsilon(args.epsilon)
    pirate = run_collusion(blobs, visible, epsilon, args.strategy, derive_seed(seed, 'collusion'))
    pirate.save(deployment.root / PIRATE)

    state = deployment.state()
    fail_rate = evaluate_next_key_failure(pirate, params, args.trials, derive_seed(seed, 'next-key'),
                                          tracing=state.tracing)
    report = dict(coalition=coalition, epsilon=epsilon, strategy=args.strategy or config('attack', 'strategy'),
                  visible_used=int(len(visible)), detected=int(pirate.detected.sum()),
                  erased=int(pirate.erased.sum()), erasure_fraction=pirate.erasure_fraction,
                  next_key_failure_rate=fail_rate, trials=args.trials,
                  deployment_hash=deployment.manifest['deployment_hash'], pirate_digest=pirate.digest())
    print(dump_json(report, deployment.root / 'attack.json'))
    return 0


def cmd_trace(args) -> int:
    deployment = Deployment(args.out_dir)
    params = deployment.params
    pirate = PirateBlob.load(args.pirate or deployment.root / PIRATE)
    if pirate.w != params.w:
        raise DeploymentMismatchError(f'pirate blob has w={pirate.w}, the deployment w={params.w}')
    policy = make_threshold(args.threshold, params.u_over_pfp, derive_seed(parse_seed(args.seed), 'calibration'))
    report = accuse(deployment.code, pirate, policy)
    record = report.to_dict()
    record['deployment_hash'] = deployment.manifest['deployment_hash']
    print(dump_json(dict(accused=record['accused'], threshold=record['threshold'],
                         erasure_fraction=record['erasure_fraction'],
                         symbol_errors=len(record['symbol_error_positions']))))
    dump_json(record, deployment.root / 'trace.json')
    return 0


def cmd_sweep(args) -> int:
    params = resolve_params(args.profile, args.params_file, args.mode)
    seed = parse_seed(args.seed)
    if args.grid == 'auto':
        eps = attacker_epsilon(params, margin=0.)
        grid = sorted({round(max(0., min(1., eps + d)), 6) for d in (-0.2, -0.1, 0., 0.1, 0.2)})
    else:
        grid = parse_epsilons(args.grid)
    outcomes = sweep_attack(params, args.colluders, args.rounds, grid, args.trials, seed,
                            strategy=args.strategy, threshold=args.threshold, form=args.form)
    records = summarise_sweep(outcomes, params, args.colluders, args.rounds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / 'sweep.jsonl').write_text(to_json_lines(records))
    print(to_json_lines(records), end='')
    return 0


def cmd_figures(args) -> int:
    paths = analysis.write_figures(args.out_dir)
    print('\n'.join(str(p) for p in paths))
    return 0


def paytv_report() -> dict:
    """Consistency of the pay-TV parameter set: code length at c0 = 8 and single-use n_max"""
    M, k, k0, gamma = (analysis.FIGURE_PARAMS[key] for key in ('M', 'k', 'k0', 'gamma'))
    l_suff = sufficient_length(8, analysis.FIGURE_U_OVER_PFP)
    single = analysis.nmax_single(M, k, k0, k, gamma, l_suff)
    target = 7 * 365 * 24 * 2
    return dict(l_suff_c8=l_suff, l_suff_rounded=float(f'{l_suff:.2g}'),
                l_suff_check=round(l_suff, -2) >= 6600,
                t_single=single.t_used, epsilon_star=single.epsilon_star,
                nmax_single=single.n_max, uses_target=target, uses_target_pow2=2 ** 17,
                nmax_check=single.n_max >= 1.2e5, nmax_upper=M / k)


def cmd_table1(args) -> int:
    report = paytv_report()
    path = None
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(args.out_dir) / 'table1.json'
    print(dump_json(report, path))
    return 0


cmd_paytv_check = cmd_table1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pymodaq_plugins_blob.cli',
                                     description='Traceable big-key blobs: deployment, attack and analysis')
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command', required=True)

    def scheme_args(p):
        p.add_argument('--profile', choices=('desk', 'paper', 'paytv'), default='desk')
        p.add_argument('--params-file', default=None, help='JSON of (some) SchemeParams fields')
        p.add_argument('--mode', choices=('single', 'multi'), default=None)

    def common(p, seed=True):
        p.add_argument('--out-dir', default='.')
        if seed:
            p.add_argument('--seed', default='00' * SEED_BYTES, help='16-byte hex root seed')

    p = sub.add_parser('init', help='draw a deployment and write every blob')
    scheme_args(p)
    common(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser('run', help='encrypt rounds and check every user decrypts them')
    common(p, seed=False)
    p.add_argument('--rounds', type=int, default=1)
    p.add_argument('--form', choices=FORMS, default='explicit')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('attack', help='collude, erase and write a pirate blob')
    common(p)
    p.add_argument('--coalition', required=True, help='comma separated 0-based user ids')
    p.add_argument('--epsilon', default='auto', help="erasure fraction, or 'auto' for eps* + margin")
    p.add_argument('--strategy', choices=STRATEGIES, default=None)
    p.add_argument('--trials', type=int, default=10000)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser('trace', help='accuse users from a pirate blob')
    common(p)
    p.add_argument('--pirate', default=None)
    p.add_argument('--threshold', choices=('calibrated', 'analytic'), default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser('sweep', help='simulate attacks over an epsilon grid')
    scheme_args(p)
    common(p)
    p.add_argument('--colluders', type=int, default=2)
    p.add_argument('--rounds', type=int, default=0)
    p.add_argument('--grid', default='auto', help="comma separated epsilons, or 'auto' around eps*")
    p.add_argument('--trials', type=int, default=10)
    p.add_argument('--strategy', choices=STRATEGIES, default=None)
    p.add_argument('--threshold', choices=('calibrated', 'analytic'), default=None)
    p.add_argument('--form', choices=FORMS, default='explicit')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('figures', help='write the figure data as CSV')
    common(p, seed=False)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser('table1', aliases=['paytv-check'], help='check the pay-TV parameter set')
    p.add_argument('--out-dir', default=None)
    p.set_defaults(func=cmd_table1)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name in ('trials', 'rounds', 'colluders'):
        if getattr(args, name, 1) < (0 if name == 'rounds' else 1):
            print(f'error: --{name} is out of range', file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ProtocolError, AuthenticityError) as e:
        code, error = 4, e
    except (DomainError, ResourceError, ExhaustionError) as e:
        code, error = 2, e
    except (OSError, FormatError, json.JSONDecodeError) as e:
        code, error = 3, e
    logger.error(f'{args.command} failed: {error}')
    print(f'error: {error}', file=sys.stderr)
    return code


if __name__ == '__main__':
    sys.exit(main())

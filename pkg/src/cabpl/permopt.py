"""Offline selection of factor-graph stage orders: collect frames the
default graph cannot decode, tabulate which other graphs fix them, and
search for a small subset with minimal joint failure."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .bp import _run_kernel, identity_perm, stage_bit_map
from .channel import awgn_llrs, ebno_to_sigma
from .crc import crc_encode
from .errors import BudgetExhausted, ConfigurationError
from .listdec import PermSet
from .polar import polar_transform


def _quantize(llrs):
    """Round-trip LLRs through the file precision so that a dataset in
    memory equals its saved-and-reloaded copy bit for bit."""
    return np.asarray([[float("%.12e" % v) for v in row] for row in llrs])


@dataclass
class FailureDataset:
    """Frames on which default-graph BP failed: the transmitted codeword
    and the channel LLRs, plus the collection settings."""

    N: int
    snr_db: float
    seed: int
    codewords: np.ndarray
    llrs: np.ndarray

    @property
    def count(self):
        return self.codewords.shape[0]

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.header_text())
            for bits, row in zip(self.codewords, self.llrs):
                fh.write("".join(str(int(b)) for b in bits) + "\n")
                fh.write(" ".join("%.12e" % v for v in row) + "\n")

    def header_text(self):
        return ("# bp failure dataset\nN=%d\nsnr_db=%r\ncount=%d\nseed=%d\n"
                % (self.N, float(self.snr_db), self.count, self.seed))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        head = {}
        body = []
        for ln in lines:
            if ln.startswith("#") or not ln.strip():
                continue
            if "=" in ln and not body:
                key, val = ln.split("=", 1)
                head[key] = val
            else:
                body.append(ln)
        try:
            N = int(head["N"])
            snr_db = float(head["snr_db"])
            count = int(head["count"])
            seed = int(head["seed"])
        except (KeyError, ValueError):
            raise ConfigurationError("malformed dataset header in %s" % path) from None
        if len(body) != 2 * count:
            raise ConfigurationError(
                "dataset body has %d lines, expected %d" % (len(body), 2 * count))
        codewords = np.array([[int(c) for c in body[2 * i]] for i in range(count)],
                             dtype=np.uint8)
        llrs = np.array([[float(t) for t in body[2 * i + 1].split()]
                         for i in range(count)])
        if codewords.shape != (count, N) or llrs.shape != (count, N):
            raise ConfigurationError("dataset rows do not match N=%d" % N)
        return cls(N=N, snr_db=snr_db, seed=seed, codewords=codewords, llrs=llrs)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(self.header_text().encode())
        for bits, row in zip(self.codewords, self.llrs):
            h.update("".join(str(int(b)) for b in bits).encode())
            h.update((" ".join("%.12e" % v for v in row)).encode())
        return h.hexdigest()


def pool_hash(perm_set):
    text = "\n".join(",".join(str(v) for v in p) for p in perm_set)
    return hashlib.sha256(text.encode()).hexdigest()


def _decode_default_batch(code, llr_rows, max_iters, min_sum):
    frozen = np.broadcast_to(code.frozen, llr_rows.shape).copy()
    u, x, conv, _, _ = _run_kernel(llr_rows, frozen, max_iters,
                                   stopping="gmatrix", min_sum=min_sum)
    return u, x, conv


def collect_failures(code, snr_db, target_count, max_iters=200, seed=0,
                     crc_spec=None, batch=512, max_frames=2_000_000,
                     min_sum=False):
    """Simulate the default factor graph until target_count undecoded
    frames are gathered.

    Payloads are uniform (CRC-extended when a crc_spec is given), sent
    as BPSK over AWGN at the given Eb/N0 (payload-rate referred).  A
    frame counts as a failure unless BP with the re-encoding stop both
    converged and reproduced the transmitted message.  Raises
    BudgetExhausted when max_frames go by first, which is the guard
    against hunting for failures on a channel too clean to produce them.
    """
    if target_count < 1:
        raise ConfigurationError("target_count must be >= 1")
    k_payload = crc_spec.k if crc_spec is not None else code.k_total
    rate = k_payload / code.N
    sigma = ebno_to_sigma(snr_db, rate)
    rng = np.random.default_rng(seed)

    kept_bits = []
    kept_llrs = []
    kept = 0
    seen = 0
    while kept < target_count:
        if seen >= max_frames:
            raise BudgetExhausted(
                "only %d failures in %d frames at %.2f dB; raise max_frames "
                "or lower the SNR" % (kept, seen, snr_db))
        b = min(batch, max_frames - seen)
        payload = rng.integers(0, 2, size=(b, k_payload), dtype=np.uint8)
        info = crc_encode(payload, crc_spec) if crc_spec is not None else payload
        x = code.encode(info)
        llrs = awgn_llrs(x, sigma, rng)
        u_true = polar_transform(x)
        u, _, conv = _decode_default_batch(code, llrs, max_iters, min_sum)
        ok = conv & np.all(u == u_true, axis=-1)
        fails = np.nonzero(~ok)[0]
        for i in fails[: target_count - kept]:
            kept_bits.append(x[i])
            kept_llrs.append(llrs[i])
            kept += 1
        seen += b

    return FailureDataset(N=code.N, snr_db=snr_db, seed=seed,
                          codewords=np.array(kept_bits, dtype=np.uint8),
                          llrs=_quantize(np.array(kept_llrs)))


@dataclass
class ConvergenceMatrix:
    """success[p, c] says whether pool stage order p decoded dataset
    frame c (BP converged and reproduced the transmitted word)."""

    success: np.ndarray
    pool_hash: str
    dataset_hash: str

    @property
    def shape(self):
        return self.success.shape

    def save(self, path):
        rows, cols = self.success.shape
        with open(path, "wb") as fh:
            fh.write(b"convergence matrix v1\n")
            fh.write(("pool_hash=%s\n" % self.pool_hash).encode())
            fh.write(("dataset_hash=%s\n" % self.dataset_hash).encode())
            fh.write(("rows=%d cols=%d\n" % (rows, cols)).encode())
            fh.write(np.packbits(self.success.astype(np.uint8), axis=1).tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.readline().strip()
            if magic != b"convergence matrix v1":
                raise ConfigurationError("%s is not a convergence matrix" % path)
            ph = fh.readline().decode().strip().split("=", 1)
            dh = fh.readline().decode().strip().split("=", 1)
            dims = fh.readline().decode().strip().split()
            try:
                rows = int(dims[0].split("=")[1])
                cols = int(dims[1].split("=")[1])
            except (IndexError, ValueError):
                raise ConfigurationError("malformed matrix header") from None
            raw = np.frombuffer(fh.read(), dtype=np.uint8)
        per_row = (cols + 7) // 8
        if raw.size != rows * per_row:
            raise ConfigurationError("matrix payload does not match its header")
        bits = np.unpackbits(raw.reshape(rows, per_row), axis=1)[:, :cols]
        return cls(success=bits.astype(bool), pool_hash=ph[1], dataset_hash=dh[1])


def evaluate_pool(dataset, pool, code, max_iters=200, min_sum=False, chunk=256):
    """Decode every dataset frame with every stage order in the pool.

    Frames are batched so all pool members decode together in one kernel
    call per chunk.  Success requires convergence of the re-encoding
    stop and exact recovery of the transmitted word.
    """
    if code.N != dataset.N:
        raise ConfigurationError("code block length does not match the dataset")
    if pool.n != code.n:
        raise ConfigurationError("pool stage orders do not match the dataset N")
    L = len(pool)
    C = dataset.count
    maps = [stage_bit_map(p, code.n) for p in pool]
    u_true = polar_transform(dataset.codewords)

    frozen_rows = np.empty((L, dataset.N), dtype=bool)
    for l, (_, minv) in enumerate(maps):
        frozen_rows[l] = code.frozen[minv]

    success = np.zeros((L, C), dtype=bool)
    for start in range(0, C, chunk):
        stop = min(start + chunk, C)
        F = stop - start
        llr_rows = np.empty((F * L, dataset.N))
        true_rows = np.empty((F * L, dataset.N), dtype=np.uint8)
        for l, (_, minv) in enumerate(maps):
            llr_rows[l::L] = dataset.llrs[start:stop][:, minv]
            true_rows[l::L] = u_true[start:stop][:, minv]
        frozen_tiled = np.tile(frozen_rows, (F, 1))
        u, _, conv, _, _ = _run_kernel(llr_rows, frozen_tiled, max_iters,
                                       stopping="gmatrix", min_sum=min_sum)
        ok = conv & np.all(u == true_rows, axis=-1)
        success[:, start:stop] = ok.reshape(F, L).T
    return ConvergenceMatrix(success=success, pool_hash=pool_hash(pool),
                             dataset_hash=dataset.content_hash())


def joint_failure(matrix, subset, cols=None):
    """Fraction of (selected) frames that every stage order in `subset`
    fails to decode."""
    subset = list(subset)
    if not subset:
        raise ConfigurationError("subset must not be empty")
    rows = matrix.success[subset]
    if cols is not None:
        rows = rows[:, cols]
    return float((~rows.any(axis=0)).mean())


@dataclass
class GaParams:
    population: int = 100
    generations: int = 200
    tournament: int = 4
    mutation_rate: float = 0.1
    elites: int = 2


@dataclass
class GaResult:
    indices: tuple
    train_failure: float
    val_failure: float
    history: list = field(default_factory=list)


def genetic_select(matrix, subset_size, train_fraction=0.75, params=None,
                   seed=0, exclude=()):
    """Search for the subset of pool rows with the lowest joint failure.

    Individuals are fixed-size index subsets; fitness is the joint
    failure over the first ceil(train_fraction * C) frames; the
    remaining frames report validation failure.  Tournament selection
    without replacement, uniform crossover on set membership with repair
    back to subset_size, per-gene swap mutation, and a small elite copied
    unchanged.  `exclude` removes rows from the gene space, typically the
    default stage order whose failures the dataset consists of.
    """
    params = params or GaParams()
    rng = np.random.default_rng(seed)
    L, C = matrix.success.shape
    genes = np.array([g for g in range(L) if g not in set(exclude)],
                     dtype=np.int64)
    if subset_size < 1 or subset_size > genes.size:
        raise ConfigurationError(
            "subset_size must lie in 1..%d" % genes.size)
    n_train = int(np.ceil(train_fraction * C))
    if not 0 < n_train <= C:
        raise ConfigurationError("train_fraction leaves no training frames")
    train = slice(0, n_train)
    val = slice(n_train, C)

    def fitness(ind):
        return joint_failure(matrix, ind, cols=train)

    def repair(members):
        members = list(dict.fromkeys(members))
        while len(members) > subset_size:
            drop = rng.integers(0, len(members))
            members.pop(drop)
        if len(members) < subset_size:
            missing = subset_size - len(members)
            outside = genes[~np.isin(genes, members)]
            picks = rng.choice(outside, size=missing, replace=False)
            members.extend(int(v) for v in picks)
        return sorted(members)

    pop = [sorted(int(v) for v in rng.choice(genes, size=subset_size,
                                             replace=False))
           for _ in range(params.population)]
    fits = np.array([fitness(ind) for ind in pop])
    history = []

    for _ in range(params.generations):
        order = np.argsort(fits, kind="stable")
        history.append(float(fits[order[0]]))
        nxt = [list(pop[i]) for i in order[: params.elites]]
        while len(nxt) < params.population:
            parents = []
            for _ in range(2):
                court = rng.choice(params.population, size=params.tournament,
                                   replace=False)
                parents.append(pop[court[np.argmin(fits[court])]])
            pa, pb = set(parents[0]), set(parents[1])
            child = list(pa & pb)
            for g in sorted(pa ^ pb):
                if rng.random() < 0.5:
                    child.append(g)
            child = repair(child)
            for i in range(subset_size):
                if rng.random() < params.mutation_rate:
                    outside = genes[~np.isin(genes, child)]
                    child[i] = int(rng.choice(outside))
            nxt.append(sorted(child))
        pop = nxt
        fits = np.array([fitness(ind) for ind in pop])

    order = np.argsort(fits, kind="stable")
    best = pop[order[0]]
    history.append(float(fits[order[0]]))
    return GaResult(indices=tuple(best),
                    train_failure=float(fits[order[0]]),
                    val_failure=joint_failure(matrix, best, cols=val),
                    history=history)


def selected_perm_set(pool, indices, include_default=True):
    """Turn chosen pool rows into a decoding set, default order first."""
    perms = tuple(pool[i] for i in indices)
    if include_default:
        ident = identity_perm(pool.n)
        if ident not in perms:
            perms = (ident,) + perms
    return PermSet(n=pool.n, perms=perms)

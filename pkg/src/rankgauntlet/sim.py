"""Round-based federated simulation wiring attacks and defenses together.

An experiment always runs two trajectories from identical seeds and
partitions: one benign (attack disabled, defense active) and one attacked.
Every random draw is derived from (config seed, purpose tag, round), so a
rerun of the same config is bit-identical and the benign/attacked pair share
client-selection sequences, which lets the attack-impact metric isolate the
attack itself.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np

from .attacks import ATTACKS, UPDATE_AWARE, AttackContext
from .defenses import (
    DefenseVerdict,
    afa,
    dnc,
    faba,
    fang_validate,
    fltrust,
    foolsgold,
    ibd,
    krum,
    multi_krum,
    reputation_embedding,
)
from .errors import AllZeroTrust, ConfigError, TooFewSamples
from .permopt import SinkhornConfig
from .ranking import (
    Ranking,
    majority_vote,
    reputation_of,
    sort_get_index,
    top_k_edges,
    weighted_majority_vote,
)
from .subnet import (
    Dataset,
    Supernetwork,
    TrainConfig,
    apply_global_ranking,
    derive_shuffle_seed,
    ep_train_scores,
    evaluate,
    init_supernetwork,
    load_dataset,
)
from .vulnid import BenignEstimate, apply_zeta, vulnerable_bounds

DEFENSE_NAMES = (
    "frl",
    "multi_krum",
    "krum",
    "afa",
    "faba",
    "dnc",
    "fltrust",
    "foolsgold",
    "fang",
    "ibd",
)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "blobs"  # "blobs" | "file"
    samples: int = 3000
    features: int = 8
    classes: int = 3
    center_scale: float = 1.2  # overlapping clusters: subnetwork quality matters
    noise: float = 1.0
    train_fraction: float = 0.8
    path: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    n_clients: int = 30
    clients_per_round: int = 10
    rounds: int = 100
    m: int = 2
    k_percent: float = 50.0
    architecture: tuple[int, ...] = (8, 16, 3)
    partition: str = "iid"  # "iid" | "dirichlet"
    beta: float = 0.5
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    attack: str = "none"
    attack_params: dict = field(default_factory=dict)
    defense: str = "frl"
    defense_params: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if not (0 <= self.m <= self.clients_per_round <= self.n_clients):
            raise ConfigError("need m <= U <= N")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.partition == "dirichlet" and self.beta <= 0:
            raise ConfigError("dirichlet partition needs beta > 0")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.attack != "none" and self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}")
        if self.defense not in DEFENSE_NAMES:
            raise ConfigError(f"unknown defense {self.defense!r}")

    @property
    def malicious_pool(self) -> int:
        """Fixed malicious ID set: the first ceil(m/U * N) client IDs."""
        if self.m == 0:
            return 0
        return int(np.ceil(self.m / self.clients_per_round * self.n_clients))

    def flat_items(self) -> list[tuple[str, str]]:
        items = []
        for section, obj in (
            ("experiment", None),
            ("dataset", self.dataset),
            ("train", self.train),
            ("sinkhorn", self.sinkhorn),
        ):
            if section == "experiment":
                pairs = {
                    "seed": self.seed,
                    "n_clients": self.n_clients,
                    "clients_per_round": self.clients_per_round,
                    "rounds": self.rounds,
                    "m": self.m,
                    "k_percent": self.k_percent,
                    "architecture": ",".join(str(s) for s in self.architecture),
                    "partition": self.partition,
                    "beta": self.beta,
                }
            else:
                pairs = {k: getattr(obj, k) for k in obj.__dataclass_fields__}
            items += [(f"{section}.{k}", repr(v)) for k, v in pairs.items()]
        items.append(("attack.name", repr(self.attack)))
        items += [(f"attack.{k}", repr(v)) for k, v in self.attack_params.items()]
        items.append(("defense.name", repr(self.defense)))
        items += [(f"defense.{k}", repr(v)) for k, v in self.defense_params.items()]
        return sorted(items)

    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={v}" for k, v in self.flat_items())
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass
class RoundRecord:
    round_t: int
    selected: list[int]
    n_malicious: int
    accuracy: float
    rho: float
    est_acc: float
    defense_kept: int
    fpr: float
    tpr: float
    global_ranking: list[Ranking]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class MetricsReport:
    acc_benign: float
    acc_attacked: float
    phi: float
    rho_mean: float
    est_acc_mean: float
    records: list[RoundRecord]
    benign_records: list[RoundRecord]
    config_hash: str


def attack_impact(acc_benign: float, acc_attacked: float) -> float:
    """phi = (acc_benign - acc_attacked) / acc_benign * 100."""
    return (acc_benign - acc_attacked) / acc_benign * 100.0


def edge_cross_rate(before: Ranking, after: Ranking, k_percent: float) -> float:
    """Fraction of originally selected edges displaced from the top-k set."""
    e_in = top_k_edges(before, k_percent)
    e_after = top_k_edges(after, k_percent)
    return (len(e_in) - len(e_in & e_after)) / len(e_in)


def _derive(seed: int, tag: str, *parts: int) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())] + [int(p) for p in parts])
    return int(ss.generate_state(1)[0])


def make_blobs(spec: DatasetSpec, seed: int) -> Dataset:
    """Gaussian class clusters with seeded centers; rows arrive shuffled."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spec.center_scale, size=(spec.classes, spec.features))
    counts = np.full(spec.classes, spec.samples // spec.classes)
    counts[: spec.samples % spec.classes] += 1
    feats = []
    labels = []
    for c in range(spec.classes):
        feats.append(centers[c] + rng.normal(0.0, spec.noise, size=(counts[c], spec.features)))
        labels.append(np.full(counts[c], c, dtype=np.int64))
    X = np.concatenate(feats)
    y = np.concatenate(labels)
    perm = rng.permutation(spec.samples)
    return Dataset(features=X[perm], labels=y[perm], n_classes=spec.classes)


def split_train_test(data: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    n_train = int(len(data) * train_fraction)
    return (
        Dataset(data.features[:n_train], data.labels[:n_train], data.n_classes),
        Dataset(data.features[n_train:], data.labels[n_train:], data.n_classes),
    )


def partition_iid(data: Dataset, n_shards: int, seed: int) -> list[Dataset]:
    """Equal-size shards, per-class counts within +-1 of each other across shards."""
    if len(data) < n_shards:
        raise TooFewSamples(f"{len(data)} samples cannot fill {n_shards} shards")
    rng = np.random.default_rng(seed)
    shard_indices: list[list[int]] = [[] for _ in range(n_shards)]
    offset = 0
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.labels == c)
        rng.shuffle(idx)
        for i, sample in enumerate(idx):
            shard_indices[(offset + i) % n_shards].append(int(sample))
        offset = (offset + idx.size) % n_shards
    if any(not s for s in shard_indices):
        raise TooFewSamples("a shard came out empty")
    return [
        Dataset(data.features[s], data.labels[s], data.n_classes)
        for s in (np.sort(np.array(s)) for s in shard_indices)
    ]


def partition_dirichlet(
    data: Dataset, n_shards: int, beta: float, seed: int
) -> list[Dataset]:
    """Per-class shard proportions drawn Dirichlet(beta); degenerate draws resampled."""
    if len(data) < n_shards:
        raise TooFewSamples(f"{len(data)} samples cannot fill {n_shards} shards")
    rng = np.random.default_rng(seed)
    for _attempt in range(200):
        shard_indices: list[list[int]] = [[] for _ in range(n_shards)]
        for c in range(data.n_classes):
            idx = np.flatnonzero(data.labels == c)
            rng.shuffle(idx)
            counts = rng.multinomial(idx.size, rng.dirichlet(np.full(n_shards, beta)))
            start = 0
            for shard, cnt in enumerate(counts):
                shard_indices[shard].extend(int(i) for i in idx[start : start + cnt])
                start += cnt
        if all(shard_indices):
            return [
                Dataset(data.features[s], data.labels[s], data.n_classes)
                for s in (np.sort(np.array(s)) for s in shard_indices)
            ]
    raise TooFewSamples("could not draw a partition with every shard non-empty")


@dataclass
class RuntimeData:
    """Immutable per-experiment inputs shared by both trajectories."""

    net: Supernetwork
    shards: list[Dataset]
    test: Dataset
    root: Dataset


@dataclass
class SimState:
    r_g: list[Ranking]
    round_t: int = 1
    attack_enabled: bool = True
    prev_malicious: list[list[Ranking]] | None = None
    prev_round_clients: int | None = None
    prev_round_malicious: int | None = None
    fg_history: np.ndarray | None = None  # per-client accumulated embeddings


def prepare_runtime(cfg: ExperimentConfig) -> RuntimeData:
    if cfg.dataset.kind == "file":
        full = load_dataset(cfg.dataset.path)
    elif cfg.dataset.kind == "blobs":
        full = make_blobs(cfg.dataset, seed=_derive(cfg.seed, "data"))
    else:
        raise ConfigError(f"unknown dataset kind {cfg.dataset.kind!r}")
    train, test = split_train_test(full, cfg.dataset.train_fraction)
    if cfg.partition == "iid":
        shards = partition_iid(train, cfg.n_clients, seed=_derive(cfg.seed, "part"))
    else:
        shards = partition_dirichlet(
            train, cfg.n_clients, cfg.beta, seed=_derive(cfg.seed, "part")
        )
    root_n = int(cfg.defense_params.get("root_samples", 100))
    root_n = min(root_n, len(test))
    root = Dataset(test.features[:root_n], test.labels[:root_n], test.n_classes)
    net = init_supernetwork(
        seed=_derive(cfg.seed, "net"),
        architecture=cfg.architecture,
        k_percent=cfg.k_percent,
    )
    return RuntimeData(net=net, shards=shards, test=test, root=root)


def _defense_verdict(
    cfg: ExperimentConfig,
    state: SimState,
    runtime: RuntimeData,
    rankings: list[list[Ranking]],
    round_t: int,
) -> DefenseVerdict:
    name = cfg.defense
    n = len(rankings)
    if name == "frl":
        return DefenseVerdict(kept=list(range(n)))
    params = cfg.defense_params
    if name in ("fang",):
        return fang_validate(rankings, runtime.net, runtime.root, cfg.k_percent)
    if name == "ibd":
        return ibd(rankings, cfg.k_percent)
    embeddings = reputation_embedding(rankings)
    if name == "multi_krum":
        return multi_krum(embeddings, cfg.m)
    if name == "krum":
        return krum(embeddings, cfg.m)
    if name == "afa":
        return afa(
            embeddings,
            xi=float(params.get("xi", 2.0)),
            xi_step=float(params.get("xi_step", 0.5)),
        )
    if name == "faba":
        return faba(embeddings, cfg.m)
    if name == "dnc":
        sdims = params.get("subsample_dims")
        return dnc(
            embeddings,
            cfg.m,
            subsample_dims=None if sdims in (None, 0) else int(sdims),
            filter_frac=float(params.get("filter_frac", 1.0)),
            seed=_derive(cfg.seed, "dnc", round_t),
        )
    if name == "fltrust":
        server_scores = ep_train_scores(
            apply_global_ranking(runtime.net, state.r_g),
            runtime.root,
            cfg.train,
            shuffle_seed=derive_shuffle_seed(cfg.seed, cfg.n_clients, round_t),
        )
        server_rankings = [sort_get_index(s, layer_id=l) for l, s in enumerate(server_scores)]
        server_embedding = reputation_embedding([server_rankings])[0]
        return fltrust(embeddings, server_embedding)
    if name == "foolsgold":
        return foolsgold(embeddings, history=state.fg_history)
    raise ConfigError(f"unknown defense {name!r}")


def _vote(
    state: SimState, rankings: list[list[Ranking]], verdict: DefenseVerdict
) -> list[Ranking]:
    n_layers = len(rankings[0])
    kept = [rankings[i] for i in verdict.kept]
    if verdict.trust is not None:
        trust = np.asarray(verdict.trust)[verdict.kept]
        try:
            return [
                weighted_majority_vote([kr[l] for kr in kept], trust)
                for l in range(n_layers)
            ]
        except AllZeroTrust:
            # no trusted client this round: the global ranking stands still
            return state.r_g
    return [majority_vote([kr[l] for kr in kept]) for l in range(n_layers)]


def _true_vulnerable_sets(
    benign_rankings: list[list[Ranking]],
    n_malicious: int,
    k_percent: float,
    zeta: float,
) -> list[frozenset[int]]:
    """Full-knowledge vulnerable sets from the actual benign aggregate."""
    n_layers = len(benign_rankings[0])
    sets = []
    for l in range(n_layers):
        rep = np.zeros(benign_rankings[0][l].n, dtype=np.float64)
        for layers in benign_rankings:
            rep += reputation_of(layers[l]).values
        est = BenignEstimate(values=rep, method="true", round_t=0, layer_id=l)
        vrange = apply_zeta(
            vulnerable_bounds(est, m=n_malicious, k_percent=k_percent), zeta
        )
        sets.append(frozenset(int(e) for e in vrange.edge_ids))
    return sets


def run_round(
    state: SimState, cfg: ExperimentConfig, runtime: RuntimeData
) -> tuple[SimState, RoundRecord]:
    t = state.round_t
    rng_sel = np.random.default_rng(_derive(cfg.seed, "select", t))
    selected = np.sort(
        rng_sel.choice(cfg.n_clients, size=cfg.clients_per_round, replace=False)
    )
    U = cfg.clients_per_round
    pool = cfg.malicious_pool
    attack_on = state.attack_enabled and cfg.attack != "none"
    malicious_pos = [i for i in range(U) if attack_on and selected[i] < pool]
    benign_pos = [i for i in range(U) if i not in malicious_pos]

    net_round = apply_global_ranking(runtime.net, state.r_g)
    rankings: list[list[Ranking] | None] = [None] * U
    benign_scores = {}
    for i in benign_pos:
        cid = int(selected[i])
        scores = ep_train_scores(
            net_round,
            runtime.shards[cid],
            cfg.train,
            shuffle_seed=derive_shuffle_seed(cfg.seed, cid, t),
        )
        benign_scores[i] = scores
        rankings[i] = [sort_get_index(s, layer_id=l) for l, s in enumerate(scores)]

    result = None
    if malicious_pos:
        params = cfg.attack_params
        ctx = AttackContext(
            round_t=t,
            client_ids=[int(selected[i]) for i in malicious_pos],
            datasets=[runtime.shards[int(selected[i])] for i in malicious_pos],
            net=runtime.net,
            global_ranking=state.r_g,
            U=U,
            m=len(malicious_pos),
            k_percent=cfg.k_percent,
            zeta=float(params.get("zeta", 1.0)),
            estimation=str(params.get("estimation", "historical")),
            train_cfg=cfg.train,
            sinkhorn=cfg.sinkhorn,
            seed=cfg.seed,
            prev_malicious=state.prev_malicious,
            prev_round_clients=state.prev_round_clients,
            prev_round_malicious=state.prev_round_malicious,
        )
        fn = ATTACKS[cfg.attack]
        if cfg.attack in UPDATE_AWARE:
            result = fn(ctx, [benign_scores[i] for i in benign_pos])
        elif cfg.attack == "vem":
            result = fn(ctx, on_empty=str(params.get("on_empty", "benign")))
        elif cfg.attack == "reverse_vulnerable":
            result = fn(ctx, on_empty="benign")
        elif cfg.attack == "noise":
            sigma = params.get("sigma")
            result = fn(ctx, sigma=None if sigma in (None, "") else float(sigma))
        else:
            result = fn(ctx)
        for j, i in enumerate(malicious_pos):
            rankings[i] = result.rankings[j]

    fg_history = state.fg_history
    if cfg.defense == "foolsgold":
        full_hist = (
            fg_history.copy()
            if fg_history is not None
            else np.zeros((cfg.n_clients, sum(runtime.net.edge_counts)))
        )
        emb = reputation_embedding(rankings)
        for i in range(U):
            full_hist[int(selected[i])] += emb[i]
        fg_history = full_hist
        round_state = SimState(
            r_g=state.r_g,
            round_t=t,
            attack_enabled=state.attack_enabled,
            prev_malicious=state.prev_malicious,
            prev_round_clients=state.prev_round_clients,
            prev_round_malicious=state.prev_round_malicious,
            fg_history=full_hist[selected],
        )
    else:
        round_state = state

    verdict = _defense_verdict(cfg, round_state, runtime, rankings, t)
    r_g_next = _vote(state, rankings, verdict)
    accuracy = evaluate(runtime.net, r_g_next, runtime.test)

    rho = 0.0
    est_acc = float("nan")
    if malicious_pos and result is not None:
        cf_rankings = [list(r) for r in rankings]
        for j, i in enumerate(malicious_pos):
            cf_rankings[i] = result.benign_rankings[j]
        cf_verdict = _defense_verdict(cfg, round_state, runtime, cf_rankings, t)
        cf_rg = _vote(state, cf_rankings, cf_verdict)
        rho = float(
            np.mean(
                [
                    edge_cross_rate(cf_rg[l], r_g_next[l], cfg.k_percent)
                    for l in range(len(r_g_next))
                ]
            )
        )
        if "estimated_sets" in result.diagnostics and benign_pos:
            true_sets = _true_vulnerable_sets(
                [rankings[i] for i in benign_pos],
                n_malicious=len(malicious_pos),
                k_percent=cfg.k_percent,
                zeta=float(cfg.attack_params.get("zeta", 1.0)),
            )
            per_layer = []
            for est, true in zip(result.diagnostics["estimated_sets"], true_sets):
                if true:
                    per_layer.append(len(est & true) / len(true))
            if per_layer:
                est_acc = float(np.mean(per_layer))

    fpr = tpr = float("nan")
    dropped = set(range(U)) - set(verdict.kept)
    if malicious_pos and verdict.trust is None:
        mal_set = set(malicious_pos)
        n_mal, n_ben = len(mal_set), U - len(mal_set)
        if n_mal:
            tpr = len(dropped & mal_set) / n_mal
        if n_ben:
            fpr = len(dropped - mal_set) / n_ben

    new_state = SimState(
        r_g=r_g_next,
        round_t=t + 1,
        attack_enabled=state.attack_enabled,
        prev_malicious=(result.rankings if result is not None else []),
        prev_round_clients=U,
        prev_round_malicious=len(malicious_pos),
        fg_history=fg_history,
    )
    record = RoundRecord(
        round_t=t,
        selected=[int(c) for c in selected],
        n_malicious=len(malicious_pos),
        accuracy=accuracy,
        rho=rho,
        est_acc=est_acc,
        defense_kept=len(verdict.kept),
        fpr=fpr,
        tpr=tpr,
        global_ranking=r_g_next,
        diagnostics={"attack": result.diagnostics if result else {}},
    )
    return new_state, record


def _run_trajectory(
    cfg: ExperimentConfig, runtime: RuntimeData, attack_enabled: bool
) -> list[RoundRecord]:
    state = SimState(r_g=runtime.net.rankings(), attack_enabled=attack_enabled)
    records = []
    for _ in range(cfg.rounds):
        state, record = run_round(state, cfg, runtime)
        records.append(record)
    return records


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Paired benign/attacked trajectories and the headline metrics."""
    runtime = prepare_runtime(cfg)
    benign_records = _run_trajectory(cfg, runtime, attack_enabled=False)
    if cfg.attack == "none":
        attacked_records = benign_records
    else:
        attacked_records = _run_trajectory(cfg, runtime, attack_enabled=True)
    acc_benign = max(r.accuracy for r in benign_records)
    acc_attacked = attacked_records[-1].accuracy
    rho_rounds = [r.rho for r in attacked_records if r.n_malicious > 0]
    est_rounds = [r.est_acc for r in attacked_records if not np.isnan(r.est_acc)]
    return MetricsReport(
        acc_benign=acc_benign,
        acc_attacked=acc_attacked,
        phi=attack_impact(acc_benign, acc_attacked),
        rho_mean=float(np.mean(rho_rounds)) if rho_rounds else 0.0,
        est_acc_mean=float(np.mean(est_rounds)) if est_rounds else float("nan"),
        records=attacked_records,
        benign_records=benign_records,
        config_hash=cfg.config_hash(),
    )


CSV_HEADER = "t,selected_ids,n_malicious,acc,phi_running,rho,est_acc,defense_kept,fpr,tpr"


def round_csv_lines(report: MetricsReport) -> list[str]:
    lines = [CSV_HEADER]
    for r in report.records:
        ids = ";".join(str(c) for c in r.selected)
        phi_running = attack_impact(report.acc_benign, r.accuracy)
        lines.append(
            f"{r.round_t},{ids},{r.n_malicious},{r.accuracy:.6f},"
            f"{phi_running:.6f},{r.rho:.6f},{r.est_acc:.6f},"
            f"{r.defense_kept},{r.fpr:.6f},{r.tpr:.6f}"
        )
    return lines


def summary_lines(report: MetricsReport, cfg: ExperimentConfig) -> list[str]:
    pairs = {
        "config_hash": report.config_hash,
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "attack": cfg.attack,
        "defense": cfg.defense,
        "acc_benign": f"{report.acc_benign:.6f}",
        "acc_attacked": f"{report.acc_attacked:.6f}",
        "phi": f"{report.phi:.6f}",
        "rho_mean": f"{report.rho_mean:.6f}",
        "est_acc_mean": f"{report.est_acc_mean:.6f}",
    }
    return [f"{k}={v}" for k, v in pairs.items()]

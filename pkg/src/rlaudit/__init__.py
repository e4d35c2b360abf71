"""Risk-limiting audit engine.

Every supported social-choice function reduces to a set of assertions of the
form "the mean of this nonnegative assorter over all cast cards exceeds 1/2";
the audit tests each assertion's complementary null sequentially, without
replacement, and certifies only when all of them are rejected at the risk
limit.
"""

from .assorters import (
    Assertion,
    AssertionStatus,
    Assorter,
    IrvAssertionKind,
    IrvAssertionSpec,
    assertions_for_contest,
    assorter_mean,
    irv_assorter,
    pairwise_assorter,
    plurality_assertions,
    supermajority_assorter,
    weighted_assorter,
)
from .ballots import (
    CardManifest,
    ContestSpec,
    ContestVote,
    DrawKind,
    ElectionDataError,
    ManifestEntry,
    PhantomKind,
    PhantomRecord,
    SocialChoice,
    VoteRecord,
    add_phantoms,
    load_election,
    load_manifest,
    resolve_draw,
)
from .comparison import (
    BAssorter,
    ComparisonContext,
    ComparisonDraw,
    b_assorter,
    comparison_audit_assertion,
    overstatement,
)
from .engine import Audit, AuditConfig, AuditError, AuditMethod, Decision
from .nonneg_mean import (
    KaplanKolmogorovState,
    KaplanMartingaleState,
    SequentialSample,
    estimate_initial_sample_size,
    integrate_01,
    kk_pvalue,
    km_pvalue,
    make_test_state,
    poly_mul_linear,
)
from .sampling import SamplingExhausted, draw_indices
from .stratification import (
    AllocationGrid,
    StratumSpec,
    fisher_combine,
    max_combined_pvalue,
)

__version__ = "0.1.0"

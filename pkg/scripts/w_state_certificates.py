"""Print certified injective and projective bounds for the W tensor e2e1e1 + e1e2e1 + e1e1e2,
the rank bracket, and the certificate witnesses."""

import math

import numpy as np

from segre.cross_norms import FormWitness, injective_norm, projective_norm
from segre.rank_tools import rank_upper_bound
from segre.tensor_core import w_tensor


def main():
    W = w_tensor()
    eps = injective_norm(W)
    print(f"injective:  [{eps.lower:.12f}, {eps.upper:.12f}]   2/sqrt(3) = {2 / math.sqrt(3):.12f}")
    print("  maximising unit vectors:", [np.round(f, 9).tolist() for f in eps.lower_witness])
    pi = projective_norm(W)
    print(f"projective: [{pi.lower:.12f}, {pi.upper:.12f}]   <W,W>/eps(W) = {3 * math.sqrt(3) / 2:.12f}")
    if isinstance(pi.lower_witness, FormWitness):
        B = pi.lower_witness
        print(f"  dual form ({B.method}), norm <= {B.norm_upper:.12f}, <B,W> = {np.vdot(B.coeffs, W.coords):.12f}")
        print("  coefficients:", np.round(B.coeffs, 9).ravel().tolist())
    terms = pi.upper_witness.terms
    print(f"  upper witness: {len(terms)} terms, norm products {[round(t.norm_product(), 12) for t in terms]}")
    est = rank_upper_bound(W, 3)
    print(f"rank from flattenings and fits: [{est.lower}, {est.upper}] ({est.status}); "
          f"border rank suspected at m = {est.border_suspected}")
    print("  fit residuals:", {m: f"{r:.2e}" for m, r in sorted(est.residuals.items())})
    est = rank_upper_bound(W, 3, refine_lower=True)
    print(f"rank with the pencil lower bound: [{est.lower}, {est.upper}] ({est.status})")


if __name__ == "__main__":
    main()

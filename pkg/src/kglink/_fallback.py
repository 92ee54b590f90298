"""NumPy implementations of the compiled kernels, used when ``_kernels`` is unavailable."""
import numpy as np


def walk_step(indptr, indices, prob):
    """Spread each node's mass uniformly over its CSR out-neighbors."""
    prob = np.asarray(prob, dtype=np.float64)
    deg = np.diff(indptr)
    share = np.divide(prob, deg, out=np.zeros_like(prob), where=deg > 0)
    return np.bincount(indices, weights=np.repeat(share, deg), minlength=len(prob)).astype(np.float64)


def transe_margin_epoch(E, R, pos, neg, lr, lam, margin, l1, normalize):
    """One pass of pairwise margin SGD for TransE, updating ``E`` and ``R`` in place."""
    total = 0.0
    shrink = 1.0 + lr * lam
    for (ps, pk, po), (ns, nk, no) in zip(pos.tolist(), neg.tolist()):
        dp = E[ps] + R[pk] - E[po]
        dn = E[ns] + R[nk] - E[no]
        if l1:
            fp, fn = -np.abs(dp).sum(), -np.abs(dn).sum()
        else:
            fp, fn = -(dp @ dp), -(dn @ dn)
        loss = max(margin + fn - fp, 0.0)
        total += loss

        rows = list(dict.fromkeys((ns, no, ps, po)))
        rrows = list(dict.fromkeys((nk, pk)))
        gE = {r: np.zeros(E.shape[1]) for r in rows}
        gR = {r: np.zeros(E.shape[1]) for r in rrows}
        if loss > 0.0:
            vn = np.sign(dn) if l1 else 2.0 * dn
            vp = np.sign(dp) if l1 else 2.0 * dp
            gE[ns] += -vn
            gE[no] += vn
            gR[nk] += -vn
            gE[ps] -= -vp
            gE[po] -= vp
            gR[pk] -= -vp
        for r in rows:
            E[r] = (E[r] - lr * gE[r]) / shrink
            if normalize:
                norm = np.sqrt(E[r] @ E[r])
                if norm > 0.0 and abs(norm - 1.0) > 1e-12:
                    E[r] /= norm
        for r in rrows:
            R[r] = (R[r] - lr * gR[r]) / shrink
    return total

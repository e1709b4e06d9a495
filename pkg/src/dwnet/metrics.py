"""Evaluation metrics: Fréchet embedding distance, keypoint distance,
and perceptual distance (shared with the reconstruction loss).

Embeddings are plain (n, d) arrays produced externally or by the
built-in frozen random extractor; no pretrained network is bundled.
Keypoint tracks are (frames, K, 3) arrays of x, y, visibility.
"""

import numpy as np

from .losses import RandomFeatureExtractor, reconstruction_loss


def matrix_sqrt_product(A: np.ndarray, B: np.ndarray) -> float:
    """Trace of the square root of A @ B for symmetric PSD inputs.

    Evaluated through the symmetric form sqrt(A) B sqrt(A) so the
    eigendecomposition stays real; eigenvalues below 1e-10 clamp to 0.
    """
    A = np.asarray(A, np.float64)
    B = np.asarray(B, np.float64)
    for name, M in (("A", A), ("B", B)):
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"{name} must be square, got {M.shape}")
        asym = float(np.abs(M - M.T).max(initial=0.0))
        if asym > 1e-8:
            raise ValueError(f"{name} is asymmetric by {asym:.3e} (> 1e-8)")
    try:
        wa, qa = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition of A failed: {exc}") from exc
    wa = np.clip(wa, 0.0, None)
    root_a = (qa * np.sqrt(wa)) @ qa.T
    M = root_a @ B @ root_a
    M = (M + M.T) / 2.0
    try:
        wm, qm = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition of sqrt(A) B sqrt(A) "
                           f"failed: {exc}") from exc
    recon = (qm * wm) @ qm.T
    resid = float(np.abs(recon - M).max(initial=0.0))
    scale = float(np.abs(M).max(initial=0.0))
    if resid > 1e-6 * max(scale, 1.0):
        raise RuntimeError(f"matrix square root did not converge; "
                           f"reconstruction residual {resid:.3e}")
    wm = np.where(wm < 1e-10, 0.0, wm)
    return float(np.sqrt(wm).sum())


def frechet_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets.

    Means and unbiased covariances are estimated from the rows; small
    negative totals from rounding clamp to zero.
    """
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    for name, e in (("a", a), ("b", b)):
        if e.ndim != 2:
            raise ValueError(f"embedding set {name} must be (n, d), "
                             f"got {e.shape}")
        if e.shape[0] < 2:
            raise ValueError(f"embedding set {name} needs n >= 2 rows for a "
                             f"covariance, got {e.shape[0]}")
        if not np.all(np.isfinite(e)):
            raise ValueError(f"embedding set {name} contains non-finite values")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    ca = np.cov(a, rowvar=False, ddof=1).reshape(a.shape[1], a.shape[1])
    cb = np.cov(b, rowvar=False, ddof=1).reshape(b.shape[1], b.shape[1])
    diff = mu_a - mu_b
    val = float(diff @ diff + np.trace(ca) + np.trace(cb)
                - 2.0 * matrix_sqrt_product(ca, cb))
    return max(val, 0.0)


def akd(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance over keypoints visible in both tracks."""
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"track shapes differ: {pred.shape} vs {gt.shape}")
    if pred.ndim != 3 or pred.shape[2] != 3:
        raise ValueError(f"tracks must be (frames, K, 3), got {pred.shape}")
    both = (pred[:, :, 2] > 0) & (gt[:, :, 2] > 0)
    if not both.any():
        raise ValueError("no keypoint pair is visible in both tracks")
    d = np.sqrt(((pred[:, :, :2] - gt[:, :, :2]) ** 2).sum(axis=2))
    return float(d[both].mean())


def perceptual_distance(extractor, a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute feature distance through one fixed extractor."""
    return reconstruction_loss([extractor], a, b)


def default_extractor(seed: int = 0) -> RandomFeatureExtractor:
    """The evaluation-side fixed extractor (shared seed convention)."""
    return RandomFeatureExtractor(seed=seed)


def embed_images(images, extractor: RandomFeatureExtractor | None = None
                 ) -> np.ndarray:
    """(n, d) embeddings: globally pooled taps of the fixed extractor."""
    extractor = extractor or default_extractor()
    rows = []
    for img in images:
        feats, _ = extractor.extract(img)
        rows.append(np.concatenate([f.mean(axis=(1, 2)) for f in feats]))
    return np.asarray(rows, np.float64)

"""Circular vs motion-aware heatmaps, fusion of the two neighbours, and decoding.

Run:  python demos/02_motion_aware_heatmaps.py
"""

import numpy as np

from motionpose.heatmaps import MotionEncodingParams, decode, encode_circular, encode_motion_aware, fuse, major_sigma

P = MotionEncodingParams()
kp = np.array([30.3, 22.8])  # heatmap pixels

circ = encode_circular(kp, P)
print(f"circular: peak {circ.peak_amplitude:.3f}, decoded {decode(circ)[0].round(4)}")

# a keypoint that moved 6 hm-px along the diagonal is smeared along that direction
d = np.array([6.0, 6.0])
blur = encode_motion_aware(kp, d, P)
print(f"sigma_major for |d|={np.linalg.norm(d):.2f}: {major_sigma(np.linalg.norm(d), P):.2f} (minor {P.sigma_base})")


def second_moments(h):
    yy, xx = np.mgrid[: h.height, : h.width]
    w = h.values / h.values.sum()
    mx, my = (w * xx).sum(), (w * yy).sum()
    cov = np.array([[(w * (xx - mx) ** 2).sum(), (w * (xx - mx) * (yy - my)).sum()],
                    [(w * (xx - mx) * (yy - my)).sum(), (w * (yy - my) ** 2).sum()]])
    return np.linalg.eigh(cov)


vals, vecs = second_moments(blur)
print(f"motion map principal sigmas {np.sqrt(vals).round(2)}, major axis {vecs[:, 1].round(3)}")
print(f"motion map decodes to {decode(blur)[0].round(4)}")

# below one heatmap pixel of motion the encoder falls back to the circular map
print("tiny motion falls back to circular:", np.array_equal(encode_motion_aware(kp, [0.3, 0.4], P).values, circ.values))

# previous and next frame maps blur in different directions; their geometric mean is tighter
h_prev = encode_motion_aware(kp, [8.0, 0.0], P)
h_next = encode_motion_aware(kp, [0.0, 8.0], P)
fused = fuse(h_prev, h_next)
print(f"fused map principal sigmas {np.sqrt(second_moments(fused)[0]).round(2)}, decoded {decode(fused)[0].round(4)}")

SCLIP = 0
PLAIN = 1
GCLIP = 2
CCLIP = 3

# an iterate component beyond this marks the run as diverged
DIVERGENCE_LIMIT = 1e30

# per-step metric columns written by the kernels
METRICS = ("gap", "mse", "consensus", "m_inf", "drift_inf")

import numpy as np
import pandas as pd

G = 6.674e-11
df = pd.read_csv("binary.csv", skipinitialspace=True)
t = df["time"].to_numpy()
r1 = df[["star1_x", "star1_y", "star1_z"]].to_numpy()
r2 = df[["star2_x", "star2_y", "star2_z"]].to_numpy()
rel = r2 - r1
sep = np.linalg.norm(rel, axis=1)

# period from successive passages of the relative angle through zero
theta = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
turns = (theta - theta[0]) / (2 * np.pi)
k = np.searchsorted(turns, 1.0)
period = t[k - 1] + (1.0 - turns[k - 1]) * (t[k] - t[k - 1]) / (turns[k] - turns[k - 1])

a = 0.5 * (sep.min() + sep.max())
total_mass = 4 * np.pi**2 * a**3 / (G * period**2)

# mass ratio from the straightest centre-of-mass track
def residual(q):
    com = (r1 + q * r2) / (1 + q)
    coef = np.polyfit(t, com, 1)
    return np.sum((com - np.outer(t, coef[0]) - coef[1]) ** 2)

qs = np.linspace(0.05, 20, 4000)
q = qs[np.argmin([residual(x) for x in qs])]
m_star1 = total_mass / (1 + q)
m_star2 = total_mass - m_star1
print(total_mass, m_star1, m_star2)

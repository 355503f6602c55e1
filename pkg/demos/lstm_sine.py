"""
A stacked LSTM on a sine wave
=============================

Fit the three-layer network to a toy series, then forecast closed loop
and compare with repeating the last value.
"""

import numpy as np

from lpbf_forecast.dataset import Windows
from lpbf_forecast.lstm import TrainConfig, forecast, train

x = np.sin(np.arange(200) * 2 * np.pi / 25)
idx = np.arange(0, 150, 5)[:, None] + np.arange(50)
win = Windows(x[idx], x[idx + 1], [], 200)

model, hist = train(win, TrainConfig(epochs=120, hidden=16, dropout=0.0, seed=1))
print(f"half-MSE: first epoch {hist[0]:.3e}, last epoch {hist[-1]:.3e}")

# %%
pred = forecast(model, x[:150], steps=16, nu=50)
truth = x[150:166]
print("lstm rmse       ", np.sqrt(np.mean((pred - truth) ** 2)).round(4))
print("persistence rmse", np.sqrt(np.mean((x[149] - truth) ** 2)).round(4))

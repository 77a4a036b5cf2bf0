"""Human-AI loop training for keyword-based event detection on microposts.

The library couples a weakly supervised target model (logistic regression or
MLP over bag-of-words, trained with keyword-expectation regularization) with
crowd truth inference (Dawid-Skene style confusion-matrix EM). An iteration
loop asks annotators to label keyword-matched microposts, fuses the crowd
estimate with the model's own expectation, retrains, and mines the highest
model/crowd disagreement for the next keyword. Annotators are either
simulated workers or a real human driving the bundled task service.
"""

__version__ = "0.1.0"

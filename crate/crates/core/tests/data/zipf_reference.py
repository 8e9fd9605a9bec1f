# Regenerates zipf_reference.json with 50-digit arithmetic.
import json
import mpmath

mpmath.mp.dps = 50
out = []
for s in ["0", "0.5", "1.0", "1.01", "2.0"]:
    se = mpmath.mpf(s)
    for k in range(1, 21):
        z = mpmath.fsum(mpmath.mpf(1) / mpmath.power(n, se) for n in range(1, k + 1))
        probs = [mpmath.nstr((mpmath.mpf(1) / mpmath.power(n, se)) / z, 25) for n in range(1, k + 1)]
        out.append({"s": float(s), "k": k, "probabilities": probs})
with open("zipf_reference.json", "w") as f:
    json.dump(out, f, indent=1)
    f.write("\n")

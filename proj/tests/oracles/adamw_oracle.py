# Copyright 2026 The FewUser Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Five AdamW steps on f(p) = (p0 - 2)^2 + p0 p1 + 3 p1^2 from p = (0.5, -1.5).

The recurrence is written out by hand in 50-digit arithmetic: decay the
parameter by (1 - lr wd), update both moments, bias-correct, step.
"""

import mpmath

mpmath.mp.dps = 50

LR = mpmath.mpf("0.1")
B1 = mpmath.mpf("0.85")
B2 = mpmath.mpf("0.999")
EPS = mpmath.mpf("1e-8")
WD = mpmath.mpf("0.01")


def grad(p):
    return [2 * (p[0] - 2) + p[1], p[0] + 6 * p[1]]


def main():
    p = [mpmath.mpf("0.5"), mpmath.mpf("-1.5")]
    m = [mpmath.mpf(0)] * 2
    v = [mpmath.mpf(0)] * 2
    print("// Generated by tests/oracles/adamw_oracle.py; do not edit.")
    print("// Parameters after steps 1..5.")
    print("const double kAdamWTrajectory[5][2] = {")
    for t in range(1, 6):
        g = grad(p)
        for i in range(2):
            p[i] = p[i] * (1 - LR * WD)
            m[i] = B1 * m[i] + (1 - B1) * g[i]
            v[i] = B2 * v[i] + (1 - B2) * g[i] ** 2
            m_hat = m[i] / (1 - B1 ** t)
            v_hat = v[i] / (1 - B2 ** t)
            p[i] = p[i] - LR * m_hat / (mpmath.sqrt(v_hat) + EPS)
        print("    {%s, %s}," % (mpmath.nstr(p[0], 20), mpmath.nstr(p[1], 20)))
    print("};")


if __name__ == "__main__":
    main()

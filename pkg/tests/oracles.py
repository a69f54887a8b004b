"""Reference values computed independently of the package, then frozen.

Each constant lists how it was obtained so it can be regenerated.
"""

import math

# Watson's integral for the simple walk on Z^3:
#   u = int_0^inf i0e(t/3)^3 dt   (scipy.integrate.quad, scipy.special.i0e)
#   = sum_n P(S_n = 0), and p_ret = 1 - 1/u.
WATSON_U3 = 1.516386059151978
P_RETURN_3D = 1.0 - 1.0 / WATSON_U3  # 0.3405373295509...


def laplace_pair_tail(t: float) -> float:
    """P(e1 + e2 > t), e_i i.i.d. with density exp(-|x|)/2, t >= 0.

    The sum has density (1 + |s|) exp(-|s|) / 4 (convolution by hand);
    integrating it over (t, inf) gives the closed form.
    """
    return (2.0 + t) * math.exp(-t) / 4.0

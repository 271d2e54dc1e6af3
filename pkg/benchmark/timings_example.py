# %%
import time
import pprint

import torch

from nisd.nearinv import detect, transfer_decompose
from nisd.problem import ProblemSpec, build_problem


# # B_a (span{1, z^2, z^6, z^8, ...} + span{z, z^3, z^5}) under T_{z^2}

# %%
def example_spec(budget):
    factor = {"zeros": [[0.5, 0]]}
    return ProblemSpec.from_dict({
        "space": {"kind": "hardy", "m": 1, "budget": budget},
        "operator": {"kind": "blaschke", "zeros": [[0, 0], [0, 0]]},
        "subspace": {"generators": [
            {"monomials": [0, 2, 6, 8, "..."], "times": factor},
            {"monomials": [1, 3, 5], "times": factor},
        ]},
    })

# %%
# timings of the build, detection and transfer steps

def perform_timing(budgets=(32, 64, 128)):
    timings = dict()

    for budget in budgets:
        print('Timing budget %d' % budget)
        timings[budget] = dict()

        time_start = time.time()
        problem = build_problem(example_spec(budget))
        time_end = time.time()
        timings[budget]['build'] = time_end - time_start

        time_start = time.time()
        report = detect(problem.M, problem.shift)
        time_end = time.time()
        timings[budget]['detect'] = time_end - time_start
        timings[budget]['(r, p)'] = (report.r, report.p)

        time_start = time.time()
        transfer_decompose(problem.M, report.F1, problem.shift,
                           functions=problem.generators)
        time_end = time.time()
        timings[budget]['decompose'] = time_end - time_start

    return timings

# %%
torch.manual_seed(0)
timings = perform_timing()
pprint.pprint(timings)

# # Deadline-aware ensembling and TTA
#
# The first pass is timed. That one number decides how many mirrored TTA
# passes and how many models fit the time budget.

from petct_datakit import SchedulerBudget, plan_ensemble, plan_tta
from petct_datakit.cli import main

budget = SchedulerBudget()
print(" latency  tta  models")
for latency in (2, 5, 8, 12.5, 30, 60, 90, 200):
    n_tta = plan_tta(latency, budget)
    print(f"{latency:8}  {n_tta:3}  {plan_ensemble(latency * (1 + n_tta), budget):6}")

# The same thing through the command line, with a scripted clock.

main(["schedule-sim", "--latency", "constant:5"])

# When later passes run slower than the first, the plan made from the first
# pass overshoots. Re-checking with the running average stops earlier.

main(["schedule-sim", "--latency", "scripted:40,70,70,70"])
main(["schedule-sim", "--latency", "scripted:40,70,70,70", "--latency-estimate", "running"])

"""
Efficiency from run totals
==========================

The efficiency quotients need only four totals, so a finished run can be
summarised without its log.
"""

from bibharvest.metrics import efficiencies, format_duration, format_percent

records = 55473
pause = 3.0
effective_time = 60573
adjusted_duration = 227592

ideal, effective, real = efficiencies(records, pause, effective_time, adjusted_duration)

# The ideal time is just the sum of the pauses.
print("theoretical ideal:", format_duration(ideal), f"({ideal:,.0f} s)")

# Above 100% means the crawler spent less time working than pausing.
print("effective efficiency:", format_percent(effective))
print("real efficiency:     ", format_percent(real))

# coding: utf-8

# # Gray zone: high predicted risk, normal glucose
#
# The gray-zone cohort plants a small preclinical group whose breath already
# carries the diabetic VOC signature while glucose has not moved yet.

# In[1]:

import numpy as np

from vocscreen.causal import CausalQuery, estimate_ate, report_record
from vocscreen.data_model import RoleConfig, build_view
from vocscreen.marker import compare_groups, evaluate_marker, marker_from_report
from vocscreen.risk import ModelSpec, cross_validate, gray_zone, risk_rank
from vocscreen.scm import LIFESTYLE, VOCS, demo_config, grayzone_config, simulate

roles = RoleConfig(VOCS, "glucose", LIFESTYLE, label="diabetic")
cohort = simulate(demo_config())
small = simulate(grayzone_config())


# Marker weights come from the causal estimates on the large cohort.

# In[2]:

records = []
for voc in VOCS:
    adjust = tuple(v for v in VOCS if v != voc) + LIFESTYLE
    records.append(report_record(estimate_ate(cohort, CausalQuery((voc,), "glucose", adjust))))
marker = marker_from_report(records, VOCS, source="in-memory estimates")
print({k: round(v, 3) for k, v in marker.coefficients.items()})


# Rank the small cohort by out-of-fold risk and flag non-diabetics above 0.5.

# In[3]:

cv = cross_validate(build_view(small, roles), ModelSpec(), folds=5, seed=0)
print("pooled", {k: round(v, 3) for k, v in cv.pooled.items()})
gz = gray_zone(risk_rank(cv), threshold=0.5, fallback_top_k=5)
print(len(gz.ids), "gray-zone subjects out of", len(gz.ids) + len(gz.others), "non-diabetics")
planted = {i for i, g in zip(small.row_ids, small["subgroup"]) if g == 2}
print("planted preclinical subjects flagged:", len(planted & set(gz.ids)), "of", len(planted))


# The marker separates the gray zone from other non-diabetics; glucose does not.

# In[4]:

scores = evaluate_marker(marker, small)
m = compare_groups((small.row_ids, scores), gz.ids, gz.others)
g = compare_groups((small.row_ids, small["glucose"]), gz.ids, gz.others)
print(f"marker  U={m.test.u_statistic:.1f} p={m.test.p_value:.3g}")
print(f"glucose U={g.test.u_statistic:.1f} p={g.test.p_value:.3g}")
print("median glucose gray zone / other:", np.median(g.values_a).round(1), np.median(g.values_b).round(1))

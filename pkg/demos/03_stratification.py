# coding: utf-8

# # Unsupervised risk strata
#
# Fit Gaussian mixtures to the standardized VOC and lifestyle features, pick
# the component count by BIC, then check the clusters against diagnosis.

# In[1]:

from vocscreen.cluster import align_and_score, ari, nmi, pca_project, select_k, silhouette
from vocscreen.data_model import RoleConfig, build_view
from vocscreen.scm import LIFESTYLE, VOCS, demo_config, simulate

view = build_view(simulate(demo_config()), RoleConfig(VOCS, "glucose", LIFESTYLE, label="diabetic"), standardize_cols=True)
table = select_k(view.X, range(1, 6), "bic", seed=0)
for row in table.rows:
    print(f"k={row['k']}  bic={row['bic']:.1f}  aic={row['aic']:.1f}")
print("chosen k:", table.chosen_k)


# In[2]:

labels = table.fits[table.chosen_k].labels
f1, mapping = align_and_score(labels, view.labels)
print(f"silhouette {silhouette(view.X, labels):.3f}")
print(f"ARI {ari(labels, view.labels):.3f}  NMI {nmi(labels, view.labels):.3f}  aligned F1 {f1:.3f}  mapping {mapping}")


# Two principal axes are enough to see the split.

# In[3]:

pca = pca_project(view.X, 2)
print("explained variance ratio", pca.explained_variance_ratio.round(3))
for c in sorted(set(labels)):
    centre = pca.projection[labels == c].mean(axis=0)
    print(f"cluster {c}: n={int((labels == c).sum())}, centre {centre.round(2)}")

# coding: utf-8

# # The camera forward model
#
# A sharp linear-light image goes through blur, sensor clipping, the tone
# curve, noise and 8-bit storage. Each stage can be switched off on its own
# through `DegradationParams`.

# In[1]:

import numpy as np

from realdeconv.dataset import motion_kernel
from realdeconv.forward import DegradationParams, degrade, gamma_expand, quantize, saturate

# In[2]:

# A ramp with a small very bright spot, in display space.
y, x = np.mgrid[0:48, 0:48] / 47
scene = 0.2 + 0.5 * x
scene[20:24, 30:34] = 1.0
linear = gamma_expand(scene, 2.2)
k = motion_kernel(9, seed=3)
print("kernel support:", np.count_nonzero(k), "taps, sum", k.sum())

# In[3]:

# Everything disabled: the observation is the plain valid-region blur.
blur_only = degrade(linear, k, DegradationParams())
print("blur only:", blur_only.shape, blur_only.min(), blur_only.max())

# In[4]:

p = DegradationParams(c=0.25, q=1 / 256, gamma=2.2, sigma=np.sqrt(5) / 255, seed=0)
v = degrade(linear, k, p)
levels = np.unique(np.round(v * 256))
print("distinct 8-bit levels:", len(levels))
print("clipped pixels:", np.mean(v >= 0.25 ** (1 / 2.2) - 1 / 512))

# In[5]:

# The stages one at a time on a few values.
vals = np.array([-0.1, 0.1, 0.3, 0.9])
print(saturate(vals, 0.25))
print(quantize(vals, 1 / 16))

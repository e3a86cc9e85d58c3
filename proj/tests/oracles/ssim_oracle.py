# Copyright 2026 The duplexrf Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Reference SSIM values for test_metrics.cpp (scikit-image, Gaussian window).

import numpy as np
from skimage.metrics import structural_similarity
W,H=23,17
y,x=np.mgrid[0:H,0:W].astype(np.float64)
a=np.stack([0.5+0.4*np.sin(0.3*x+0.7*y+c) for c in range(3)],-1)
b=np.clip(np.stack([a[...,c]+0.1*np.cos(0.5*x-0.2*y+2*c) for c in range(3)],-1),0,1)
neg=1-a
for name,o in [("perturbed",b),("negative",neg)]:
    s=structural_similarity(a,o,channel_axis=-1,gaussian_weights=True,sigma=1.5,use_sample_covariance=False,data_range=1.0)
    print(name, repr(s))

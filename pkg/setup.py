# Copyright 2022 The Bastate Contributors
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

from setuptools import find_packages, setup

with open("README.md", "r") as file:
    long_description = file.read()

setup(
    name="bastate",
    version="0.1.0",
    author="The Bastate contributors",
    description="Safety-embedded control with barrier states",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=("bastate*",)),
    package_data={
        "bastate": ["py.typed"],
    },
    classifiers=[
        "Programming Language :: Python :: 3.9",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "absl-py",
        "numpy",
        "scipy",
        "tensorboard",
        "tensorflow>=2.4",
    ],
    extras_require={
        "plot": ["matplotlib"],
    },
    entry_points={
        "console_scripts": ["bastate=bastate.cli:run"],
    },
)

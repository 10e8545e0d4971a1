from setuptools import setup, find_packages
from io import open
from os import path

import pathlib
# The directory containing this file
HERE = pathlib.Path(__file__).parent

# The text of the README file
README = (HERE / "README.md").read_text()

# automatically captured required modules for install_requires in requirements.txt
with open(path.join(HERE, 'requirements.txt'), 'r') as f:
    all_reqs = f.read().split('\n')

install_requires = [x.strip() for x in all_reqs if x.strip() and ('git+' not in x) and (
    not x.startswith('#')) and (not x.startswith('-'))]
setup (
 name = 'salarymatch',
 description = 'A CLI-based python package to simulate, measure and estimate loss aversion in job search from the distribution of salary growth.',
 version = '0.1.0',
 packages = find_packages(exclude=["tests"]), # list of all packages
 install_requires = install_requires,
 python_requires='>=3.9.0',
 include_package_data = True,
 package_data = {'salarymatch': ['template_files/*.json']},
 entry_points='''
        [console_scripts]
        salarymatch=salarymatch.__main__:main
    ''',
 long_description=README,
 long_description_content_type="text/markdown",
 license='MIT',
  classifiers=[
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
    ]
)

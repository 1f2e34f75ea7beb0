# -*- coding: utf-8 -*-
from setuptools import setup, find_packages

with open('README.md') as f:
    readme = f.read()

with open('requirements.txt') as f:
    requirements = [line.strip() for line in f if line.strip()]

setup(
    name='niftrace',
    version='0.1.0',
    description='niftrace: a CPU path tracer lit by a neural HDR image field, with its trainer and evaluation harness.',
    long_description=readme,
    long_description_content_type='text/markdown',
    license='GPLv3',
    packages=find_packages(exclude=('tests', 'docs', 'examples')),
    install_requires=[r for r in requirements if not r.startswith('pytest')],
    extras_require={'test': ['pytest', 'pytest-cov']},
    python_requires='>=3.8',
    entry_points={
        'console_scripts': ['niftrace=niftrace.cli:main'],
    },
)

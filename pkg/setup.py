from setuptools import setup, find_packages

setup(
    name='sni-impute',
    version='1.0.0',
    packages=find_packages(where='src'),
    package_dir={'': 'src'},
    package_data={'sni_impute': ['schemas/*.json']},
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.21',
        'pandas>=1.5',
        'scipy>=1.7',
        'scikit-learn>=1.0',
        'networkx>=2.6',
        'jsonschema>=4.0',
        'python-dotenv>=1.0.0'
    ],
    entry_points={
        'console_scripts': [
            'sni=sni_impute.cli:main',
        ],
    },
)

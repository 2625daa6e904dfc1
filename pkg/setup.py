from setuptools import setup, find_packages

# Read requirements.txt for dependencies
def parse_requirements():
    with open('requirements.txt') as f:
        lines = f.read().splitlines()
        # Filter out -e, git+ or anything else that confuses setup()
        return [
            line for line in lines
            if line and not line.startswith('-e') and not line.startswith('#') and 'git+' not in line
        ]

setup(
    name='discrete-sampler',
    version='0.1',
    description='Metropolis-Hastings and accelerated MCMC on finite state spaces, as density flows and particle jump processes',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["venv*", "tests*"], include=['discrete_sampler']),
    include_package_data=False,
    install_requires=parse_requirements(),
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'discrete-sampler=discrete_sampler.cli:cli',
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
)

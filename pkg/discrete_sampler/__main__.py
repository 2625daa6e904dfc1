from discrete_sampler.cli import cli

cli(prog_name='discrete-sampler')

import click


def log(msg, pre=True, error=False, warn=False, color=None):
    """Print a message to stdout (errors go to stderr)"""
    if error:
        click.secho(('[vesselfit] ' if pre else '') + 'Error: ' + msg, err=True, fg='red')
    elif warn:
        click.secho(('[vesselfit] ' if pre else '') + msg, fg='yellow')
    else:
        click.echo(('[vesselfit] ' if pre else '') + click.style(msg, fg=color))

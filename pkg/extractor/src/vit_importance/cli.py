import click

from .extract import ExtractionSpec, extract_scores
from .synth import synthesize_scores


@click.group()
def main():
    """Per-patch importance profiles for the transmission core."""


@main.command()
@click.option("--model", required=True, help="Pretrained ViT identifier or local path.")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--layer-policy", type=click.Choice(["last", "mean"]), default="last")
@click.option("--out", "output_path", required=True, type=click.Path())
def extract(model, image_path, layer_policy, output_path):
    """Extract attention scores from a pretrained encoder."""
    spec = ExtractionSpec(
        model_name=model, image_path=image_path, output_path=output_path, layer_policy=layer_policy
    )
    profile = extract_scores(spec)
    click.echo(f"wrote {profile['g']} scores to {output_path}")


@main.command()
@click.option("--g", type=int, default=196)
@click.option("--dist", type=click.Choice(["uniform", "ramp", "heavytail"]), default="ramp")
@click.option("--seed", type=int, default=0)
@click.option("--out", "output_path", required=True, type=click.Path())
def synth(g, dist, seed, output_path):
    """Write a synthetic profile with the same schema."""
    synthesize_scores(g, dist, seed, output_path)
    click.echo(f"wrote synthetic {dist} profile for g={g} to {output_path}")


if __name__ == "__main__":
    main()

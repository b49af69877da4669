from pathlib import Path


def seed_output_dir(output_dir, seed):
    """Dossier de sortie d'une graine : <output_dir>/seed_<seed>"""
    return Path(output_dir) / f"seed_{seed}"


def seed_output_path(output_dir, seed, filename):
    return seed_output_dir(output_dir, seed) / filename


def parse_seed_list(value):
    """'1,2, 3' -> [1, 2, 3]"""
    if value is None or value == '':
        return []
    return [int(part) for part in str(value).split(',') if part.strip()]

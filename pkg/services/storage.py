# services/storage.py
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from loguru import logger

# boto imports are optional if AWS isn't configured locally
try:
    import boto3
    from botocore.exceptions import ClientError, NoCredentialsError
except Exception:  # pragma: no cover - boto not required for local runs
    boto3 = None
    NoCredentialsError = Exception
    ClientError = Exception

load_dotenv()


def _settings() -> dict:
    return {
        "bucket": os.getenv("AWS_BUCKET_NAME"),
        "key_id": os.getenv("AWS_ACCESS_KEY_ID"),
        "secret": os.getenv("AWS_SECRET_ACCESS_KEY"),
        "region": os.getenv("AWS_DEFAULT_REGION", "us-east-1"),
        "prefix": os.getenv("GEOPHOTO_S3_PREFIX", "geophoto"),
    }


def _aws_configured(settings: dict) -> bool:
    return bool(settings["bucket"] and settings["key_id"] and settings["secret"] and boto3)


def _get_s3_client(settings: dict):
    return boto3.client(
        "s3",
        aws_access_key_id=settings["key_id"],
        aws_secret_access_key=settings["secret"],
        region_name=settings["region"],
    )


def publish_outputs(out_dir: Path, run_name: Optional[str] = None) -> dict:
    """Mirror an output tree to S3 when configured, otherwise leave it on disk.

    Returns a dict with 'status' and 'storage', plus the uploaded keys or the
    local path. ``_meta`` files are uploaded too; they are only excluded from
    reproducibility checks.
    """
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        return {"status": "error", "error": f"{out_dir} is not a directory"}
    files = sorted(p for p in out_dir.rglob("*") if p.is_file())

    settings = _settings()
    if not _aws_configured(settings):
        logger.info("storage: AWS not configured; {} files stay in {}", len(files), out_dir)
        return {"status": "stored", "storage": "local", "path": str(out_dir.resolve()), "files": len(files)}

    s3 = _get_s3_client(settings)
    prefix = "/".join(p for p in (settings["prefix"], run_name or out_dir.name) if p)
    keys = []
    try:
        for path in files:
            key = f"{prefix}/{path.relative_to(out_dir).as_posix()}"
            s3.upload_file(str(path), settings["bucket"], key)
            keys.append(key)
    except NoCredentialsError:
        return {"status": "error", "error": "AWS credentials not found"}
    except ClientError as e:
        return {"status": "error", "error": str(e), "uploaded": keys}
    logger.info("storage: uploaded {} files to s3://{}/{}", len(keys), settings["bucket"], prefix)
    return {"status": "uploaded", "storage": "s3", "bucket": settings["bucket"], "keys": keys}

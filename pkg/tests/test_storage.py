import pytest

from services import storage

AWS_VARS = ("AWS_BUCKET_NAME", "AWS_ACCESS_KEY_ID", "AWS_SECRET_ACCESS_KEY")


class RecordingClient:
    def __init__(self):
        self.uploads = []

    def upload_file(self, filename, bucket, key):
        self.uploads.append((bucket, key))


@pytest.fixture
def out_tree(tmp_path):
    out = tmp_path / "out"
    (out / "_meta").mkdir(parents=True)
    (out / "report.json").write_text("{}")
    (out / "_meta" / "run_meta.json").write_text("{}")
    return out


def test_local_fallback_without_aws(out_tree, monkeypatch):
    for var in AWS_VARS:
        monkeypatch.delenv(var, raising=False)
    result = storage.publish_outputs(out_tree)
    assert result["status"] == "stored"
    assert result["storage"] == "local"
    assert result["files"] == 2


def test_missing_directory(tmp_path):
    assert storage.publish_outputs(tmp_path / "missing")["status"] == "error"


def test_upload_keys_mirror_tree(out_tree, monkeypatch):
    monkeypatch.setenv("AWS_BUCKET_NAME", "bucket")
    monkeypatch.setenv("AWS_ACCESS_KEY_ID", "key")
    monkeypatch.setenv("AWS_SECRET_ACCESS_KEY", "secret")
    monkeypatch.setenv("GEOPHOTO_S3_PREFIX", "runs")
    client = RecordingClient()
    monkeypatch.setattr(storage, "boto3", object())
    monkeypatch.setattr(storage, "_get_s3_client", lambda settings: client)
    result = storage.publish_outputs(out_tree, run_name="r1")
    assert result["status"] == "uploaded"
    assert client.uploads == [("bucket", "runs/r1/_meta/run_meta.json"), ("bucket", "runs/r1/report.json")]

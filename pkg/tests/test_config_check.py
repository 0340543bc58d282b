import json

from cai.config_check import ConfigValidator

from conftest import EXAMPLES, GOLDEN


def _validator(tmp_path, config_path=None, **overrides):
    values = {'paths.examples': str(EXAMPLES), 'paths.golden': str(GOLDEN),
              'paths.output': str(tmp_path / 'out')}
    values.update({key.replace('__', '.'): value for key, value in overrides.items()})
    return ConfigValidator(config_path, values)


def test_local_backends_pass_and_create_the_output_dir(tmp_path):
    validator = _validator(tmp_path)
    assert validator.run_full_validation()
    assert validator.errors == []
    assert (tmp_path / 'out').is_dir()


def test_remote_backend_needs_its_url(tmp_path, monkeypatch):
    monkeypatch.delenv('CAI_LLM_URL', raising=False)
    validator = _validator(tmp_path, llm__backend='remote')
    assert not validator.run_full_validation()
    assert any('CAI_LLM_URL' in message for message in validator.errors)


def test_missing_token_is_only_a_warning(tmp_path, monkeypatch):
    monkeypatch.setenv('CAI_EMBED_URL', 'https://embed.example')
    monkeypatch.delenv('CAI_EMBED_TOKEN', raising=False)
    validator = _validator(tmp_path, embedding__backend='remote')
    assert validator.run_full_validation()
    assert any('CAI_EMBED_TOKEN' in message for message in validator.warnings)


def test_placeholder_values_count_as_missing(tmp_path, monkeypatch):
    monkeypatch.setenv('CAI_RELEVANCE_URL', 'your_relevance_endpoint')
    validator = _validator(tmp_path, relevance__backend='remote')
    assert not validator.run_full_validation()


def test_invalid_settings_fail(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'dedup': {'threshold': 2.0}}), encoding='utf-8')
    validator = _validator(tmp_path, config_path=str(path))
    assert not validator.run_full_validation()
    assert validator.errors[0].startswith('Invalid configuration')


def test_missing_files_and_sampling_warnings(tmp_path):
    validator = _validator(tmp_path, paths__golden=str(tmp_path / 'none.jsonl'),
                           llm__temperature=0.7)
    assert validator.run_full_validation()
    assert len(validator.warnings) == 2
    missing_store = _validator(tmp_path, paths__examples=str(tmp_path / 'none.jsonl'))
    assert not missing_store.run_full_validation()

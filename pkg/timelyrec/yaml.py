"""consolidated yaml API

ensures the same yaml settings for reading/writing config files,
checkpoint headers and synthetic ground truth throughout timelyrec
"""
import io

from ruamel.yaml import YAML
from ruamel.yaml.composer import Composer


class _NoEmptyFlowComposer(Composer):
    """yaml composer that keeps empty containers out of flow style

    a config file holding `{}` or `model: {}` that is filled in and
    written back would otherwise come out as `{key: value}`.
    workaround for ruamel.yaml issue #255
    """

    def compose_mapping_node(self, anchor):
        node = super().compose_mapping_node(anchor)
        if not node.value:
            node.flow_style = False
        return node

    def compose_sequence_node(self, anchor):
        node = super().compose_sequence_node(anchor)
        if not node.value:
            node.flow_style = False
        return node


# round-trip loader for user facing config files, keeps comments on rewrite
yaml = YAML(typ="rt")
yaml.Composer = _NoEmptyFlowComposer
yaml.default_flow_style = False

# plain python containers for machine written artifacts
safe_yaml = YAML(typ="safe", pure=True)
safe_yaml.default_flow_style = False


def dumps(data):
    """Serialize data to a yaml string with the safe dumper"""
    stream = io.StringIO()
    safe_yaml.dump(data, stream)
    return stream.getvalue()


def loads(text):
    """Parse a yaml string with the safe loader"""
    return safe_yaml.load(text)

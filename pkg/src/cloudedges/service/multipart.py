"""Minimal multipart/form-data parsing built on the stdlib email package.

Only what session creation needs: named fields, optional filenames, raw
byte payloads.  Nested multiparts and content-transfer encodings beyond
what HTTP clients emit are out of scope.
"""

import email.parser
import email.policy

from ..errors import DataError


def parse_multipart(body: bytes, content_type: str) -> dict:
    """Split a request body into ``{field name: (filename | None, bytes)}``."""
    if not content_type or "multipart/form-data" not in content_type:
        raise DataError("expected a multipart/form-data request body")
    header = (f"Content-Type: {content_type}\r\n"
              "MIME-Version: 1.0\r\n\r\n").encode("ascii")
    message = email.parser.BytesParser(
        policy=email.policy.HTTP).parsebytes(header + body)
    if not message.is_multipart():
        raise DataError("multipart body could not be parsed")
    fields = {}
    for part in message.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name is None:
            continue
        payload = part.get_payload(decode=True)
        fields[str(name)] = (part.get_filename(),
                             payload if payload is not None else b"")
    return fields

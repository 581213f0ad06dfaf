"""Socket plumbing for the fairwaysim wire protocol.

One connection, one line-delimited JSON conversation: the server greets
with a banner document, then answers each `{"id", "method", "params"}`
request with a response echoing the id and carrying exactly one of
`result` or `error`. All simulation state lives on the server; this module
holds nothing but the socket and a request counter.
"""

import json
import socket


class ClientError(Exception):
    """Base class for everything this package raises on purpose."""


class ConnectionLost(ClientError):
    """The server went away mid-conversation. Reconnect and carry on:
    the session (and any open episode) survives on the server side."""


class RemoteError(ClientError):
    """The server answered with an error document. Code and message are
    passed through verbatim."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class BadResponse(ClientError):
    """The server's reply did not match the documented response shape."""


class JsonLineConnection:
    """Blocking request/response channel over one TCP connection."""

    def __init__(self, host="127.0.0.1", port=7332, timeout=30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as err:
            raise ConnectionLost(f"connect to {host}:{port} failed: {err}") from err
        self._fh = self._sock.makefile("rwb")
        self._next_id = 0
        self.banner = self._read_line()
        if self.banner.get("server") != "fairwaysim":
            raise BadResponse(f"unexpected banner: {self.banner!r}")

    def _read_line(self):
        try:
            line = self._fh.readline()
        except OSError as err:
            raise ConnectionLost(str(err)) from err
        if not line:
            raise ConnectionLost("server closed the connection")
        try:
            return json.loads(line)
        except json.JSONDecodeError as err:
            raise BadResponse(f"unparseable server line: {line[:80]!r}") from err

    def call(self, method, params=None):
        """One round trip. Returns the result document or raises RemoteError."""
        rid = self._next_id
        self._next_id += 1
        request = {"id": rid, "method": method, "params": params or {}}
        try:
            self._fh.write(json.dumps(request).encode() + b"\n")
            self._fh.flush()
        except OSError as err:
            raise ConnectionLost(str(err)) from err
        reply = self._read_line()
        if reply.get("id") != rid:
            raise BadResponse(f"response id {reply.get('id')!r} for request {rid}")
        if ("result" in reply) == ("error" in reply):
            raise BadResponse("response must carry exactly one of result/error")
        if "error" in reply:
            err = reply["error"]
            raise RemoteError(err.get("code", "unknown"), err.get("message", ""))
        return reply["result"]

    def close(self):
        try:
            self._fh.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

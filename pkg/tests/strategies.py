"""Hypothesis strategies shared across the suite."""

import ipaddress

from hypothesis import strategies as st

from cooproam.wire import (MAX_CHANNEL, MAX_ENTRIES, MIN_CHANNEL, AmnDiscover, AmnResp, CacheEntry,
                           InfoAlert, InfoReq, InfoResp, IpReq, IpResp, MacAddress, RelayReq)

macs = st.binary(min_size=6, max_size=6).map(MacAddress)
ips = st.integers(0, 2**32 - 1).map(ipaddress.IPv4Address)
channels = st.integers(MIN_CHANNEL, MAX_CHANNEL)
entries = st.builds(CacheEntry, macs, channels, ips)
entry_lists = st.lists(entries, max_size=MAX_ENTRIES)

messages = st.one_of(
    st.builds(InfoReq, macs, entry_lists.map(tuple)),
    st.builds(InfoResp, macs, macs, entry_lists.map(tuple)),
    st.builds(AmnDiscover, macs, ips),
    st.builds(AmnResp, macs, ips, ips, macs, st.booleans()),
    st.builds(IpReq, macs),
    st.builds(IpResp, macs, macs, ips, ips),
    st.builds(RelayReq, macs, ips, ips, macs, ips),
    st.builds(InfoAlert, macs, macs),
)

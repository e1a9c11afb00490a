//! Just enough markup scanning to find inline script bodies.

fn find_ci(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()].eq_ignore_ascii_case(needle))
}

fn has_src_attribute(tag: &[u8]) -> bool {
    tag.split(|b| b.is_ascii_whitespace()).skip(1).any(|attr| {
        let name = attr.split(|&b| b == b'=').next().unwrap_or_default();
        name.eq_ignore_ascii_case(b"src")
    })
}

/// Bodies of `<script>` regions in document order. An unterminated region
/// runs to the end of the document. Tags with a `src` attribute contribute
/// nothing since nothing is ever fetched.
pub fn extract_scripts(html: &[u8]) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut at = 0;
    while let Some(open) = find_ci(html, b"<script", at) {
        let after_name = open + b"<script".len();
        match html.get(after_name) {
            Some(b'>' | b'/') => {}
            Some(b) if b.is_ascii_whitespace() => {}
            None => break,
            Some(_) => {
                at = after_name;
                continue;
            }
        }
        let Some(tag_end) = html[after_name..].iter().position(|&b| b == b'>').map(|p| after_name + p) else {
            break;
        };
        let body_start = tag_end + 1;
        let (body_end, next) = match find_ci(html, b"</script", body_start) {
            Some(close) => {
                let after = html[close..].iter().position(|&b| b == b'>').map_or(html.len(), |p| close + p + 1);
                (close, after)
            }
            None => (html.len(), html.len()),
        };
        if !has_src_attribute(&html[open..tag_end]) {
            out.push(html[body_start..body_end].to_vec());
        }
        at = next;
    }
    out
}

use bertlab::formats::*;
use bertlab::Error;
use bertlab_core::vocab::Vocab;

#[test]
fn corpus_round_trip_keeps_documents() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    let docs = vec![vec!["今天天气好".to_string(), "我们去公园".into()], vec!["一二三".into()]];
    write_corpus(&path, &docs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "#bertlab-corpus v1\n今天天气好\n我们去公园\n\n一二三\n");
    assert_eq!(read_corpus(&path).unwrap(), docs);
}

#[test]
fn corpus_tolerates_extra_blank_lines_and_crlf() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "#bertlab-corpus v1\r\n\r\n甲乙\r\n丙\r\n\r\n\r\n丁\r\n").unwrap();
    assert_eq!(read_corpus(&path).unwrap(), vec![vec!["甲乙".to_string(), "丙".into()], vec!["丁".into()]]);
}

#[test]
fn missing_header_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "甲乙\n").unwrap();
    assert!(matches!(read_corpus(&path), Err(Error::Format { line: 1, .. })));
    assert!(matches!(read_vocab(&path), Err(Error::Format { .. })));
}

#[test]
fn vocab_round_trip_preserves_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    let vocab = Vocab::build(["ab ab b", "ca"], 100, 1).unwrap();
    write_vocab(&path, &vocab).unwrap();
    let back = read_vocab(&path).unwrap();
    assert_eq!(back.tokens(), vocab.tokens());
    assert_eq!(back.id("b"), vocab.id("b"));
}

#[test]
fn labeled_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.tsv");
    let items = vec![("好".to_string(), 1), ("不好".to_string(), 0)];
    write_labeled(&path, &items).unwrap();
    assert_eq!(read_labeled(&path).unwrap(), items);
    std::fs::write(&path, "#bertlab-labeled v1\n1\t好\nx\t坏\n").unwrap();
    match read_labeled(&path) {
        Err(Error::Format { line: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "#bertlab-labeled v1\nno tab\n").unwrap();
    assert!(matches!(read_labeled(&path), Err(Error::Format { line: 2, .. })));
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let err = read_corpus("/nonexistent/corpus.txt".as_ref()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/corpus.txt"));
}

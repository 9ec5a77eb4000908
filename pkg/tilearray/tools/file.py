"""
TileArray File Tools
"""

import hashlib
import json
import os
import logging

import yaml


def sha256_text(text):
    """
    Hex digest of a text artifact (traces are hashed in their canonical formatted form)
    """
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def sha256_bytes(data):
    return hashlib.sha256(bytes(data)).hexdigest()


def read_from_file(file_path):
    '''
    Read an experiment description and return a dict
    :param file_path: path to a .yaml/.yml or .json file
    :return: dict (empty if the file does not exist)
    '''
    content = {}
    if os.path.exists(file_path):
        with open(file_path, 'r') as stream:
            if file_path.endswith('.yaml') or file_path.endswith('.yml'):
                content = yaml.load(stream, yaml.SafeLoader) or {}
            else:
                # Assume json if not yaml
                content = json.load(stream)
    else:
        logging.error('given file: ' + file_path + ' does not exist')
    return content


def write_text(path, text):
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    with open(path, 'w', newline='\n') as f:
        f.write(text)
    return path

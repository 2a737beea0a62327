from hardylab.utils.string_utils import slugify, to_snake_case
